import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "leanviz.settings")
django.setup()
