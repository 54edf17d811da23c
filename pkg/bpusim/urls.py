"""
URL configuration for bpusim project.

Only the admin is exposed: it browses stored scenario runs and search campaigns.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
