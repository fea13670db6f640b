import os
from pathlib import Path


BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get(
    'DJANGO_SECRET_KEY',
    'django-insecure-mobilevel-local-dev-key'
)

DEBUG = False

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'frontier',
]

# No persistence: every analysis is recomputed from the problem file.
DATABASES = {}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


def _float_env(name: str, default: str) -> float:
    raw = os.environ.get(name, default).strip()
    try:
        return float(raw)
    except ValueError:
        return float(default)


def _int_env(name: str, default: str) -> int:
    raw = os.environ.get(name, default).strip()
    try:
        return int(float(raw))
    except ValueError:
        return int(default)


# Numerical tolerances (override with env vars or BILEVEL_TOLERANCE_FILE)
BILEVEL_TAU_FEAS = _float_env('BILEVEL_TAU_FEAS', '1e-9')
BILEVEL_TAU_OPT = _float_env('BILEVEL_TAU_OPT', '1e-9')
BILEVEL_TAU_FACE = _float_env('BILEVEL_TAU_FACE', '1e-7')
BILEVEL_TAU_VERT = _float_env('BILEVEL_TAU_VERT', '1e-8')
BILEVEL_TAU_PROJ = _float_env('BILEVEL_TAU_PROJ', '1e-9')
BILEVEL_TAU_NNLS = _float_env('BILEVEL_TAU_NNLS', '1e-9')
BILEVEL_TAU_CERT = _float_env('BILEVEL_TAU_CERT', '1e-8')
BILEVEL_TAU_DOM = _float_env('BILEVEL_TAU_DOM', '0')
BILEVEL_TAU_POS = _float_env('BILEVEL_TAU_POS', '1e-6')
BILEVEL_TAU_ACT = _float_env('BILEVEL_TAU_ACT', '1e-7')
BILEVEL_EPS_LEX = _float_env('BILEVEL_EPS_LEX', '1e-6')

# Optional JSON file {name: value} with tolerance defaults
BILEVEL_TOLERANCE_FILE = os.environ.get('BILEVEL_TOLERANCE_FILE') or None

# Iteration caps and desk-scale guards
BILEVEL_LP_MAX_ITER = _int_env('BILEVEL_LP_MAX_ITER', '5000')
BILEVEL_PROJ_MAX_ITER = _int_env('BILEVEL_PROJ_MAX_ITER', '5000')
BILEVEL_NNLS_MAX_ITER = _int_env('BILEVEL_NNLS_MAX_ITER', '500')
BILEVEL_GRID_CAP = _int_env('BILEVEL_GRID_CAP', '10000000')
BILEVEL_VERTEX_MAX_DIM = _int_env('BILEVEL_VERTEX_MAX_DIM', '6')
BILEVEL_VERTEX_MAX_ROWS = _int_env('BILEVEL_VERTEX_MAX_ROWS', '24')
BILEVEL_ORACLE_STEP = _float_env('BILEVEL_ORACLE_STEP', '0.05')
BILEVEL_MAX_WORKERS = _int_env('BILEVEL_MAX_WORKERS', '4')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'frontier': {
            'handlers': ['console'],
            'level': os.environ.get('BILEVEL_LOG_LEVEL', 'WARNING').upper(),
            'propagate': False,
        },
    },
}
