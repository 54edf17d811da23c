from django.contrib import admin

from .models import ResultRecord, ScenarioRun, SearchCampaign


# =======================
# INLINES
# =======================
class ResultRecordInline(admin.TabularInline):
    model = ResultRecord
    extra = 0
    fields = ('ordine', 'params', 'spy_rate', 'shadow_rate', 'classification')
    readonly_fields = fields
    can_delete = False
    ordering = ['ordine']


class SearchCampaignInline(admin.StackedInline):
    model = SearchCampaign
    extra = 0
    readonly_fields = (
        'mode', 'victim_depth', 'trials', 'successes', 'exponent', 'chernoff_log_bound', 'lower_bound_only'
    )
    can_delete = False


# =======================
# SCENARIO RUN ADMIN
# =======================
@admin.register(ScenarioRun)
class ScenarioRunAdmin(admin.ModelAdmin):
    list_display = ('scenario', 'preset', 'seed', 'exit_code', 'effect_bits', 'num_righe', 'created')
    list_filter = ('scenario', 'preset', 'exit_code')
    search_fields = ('scenario', 'preset')
    date_hierarchy = 'created'
    inlines = [SearchCampaignInline, ResultRecordInline]
    list_per_page = 50

    fieldsets = (
        ('Esecuzione', {
            'fields': ('scenario', 'preset', 'seed', 'exit_code', 'effect_bits')
        }),
        ('Configurazione', {
            'fields': ('config', 'microarch'),
            'classes': ('collapse',),
        }),
    )

    readonly_fields = ('scenario', 'preset', 'seed', 'exit_code', 'config', 'microarch')

    def num_righe(self, obj):
        return obj.records.count()
    num_righe.short_description = 'N. Righe'

    def get_queryset(self, request):
        qs = super().get_queryset(request)
        return qs.prefetch_related('records')


# =======================
# SEARCH CAMPAIGN ADMIN
# =======================
@admin.register(SearchCampaign)
class SearchCampaignAdmin(admin.ModelAdmin):
    list_display = ('mode', 'victim_depth', 'trials', 'successes', 'tasso', 'exponent', 'lower_bound_only')
    list_filter = ('mode', 'victim_depth', 'lower_bound_only')
    ordering = ('-run__created',)

    def tasso(self, obj):
        rate = obj.success_rate
        return f"{rate:.3g}" if rate is not None else "-"
    tasso.short_description = 'Tasso successo'

    def get_queryset(self, request):
        qs = super().get_queryset(request)
        return qs.select_related('run')
