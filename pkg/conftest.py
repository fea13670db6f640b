import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'mobilevel.settings')
django.setup()
