import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "giantatom.settings")
django.setup()
