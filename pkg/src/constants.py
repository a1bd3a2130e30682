DOPPLER_TOKEN_NAME = "CASELAB_DOPPLER_TOKEN"
DOPPLER_PROJECT_NAME = "caselab"

COMPLETION_ENDPOINT_VAR = "COMPLETION_ENDPOINT"
COMPLETION_KEY_VAR = "COMPLETION_KEY"

REQUIRED_ENV_VAR_NAMES = [
    COMPLETION_ENDPOINT_VAR,
    COMPLETION_KEY_VAR,
]

LOGGER_NAME = "caselab"

# binary formats
CEMB_MAGIC = b"CEMB"
CEMB_VERSION = 1
CHECKPOINT_MAGIC = b"CASE"
CHECKPOINT_VERSION = 1
F32T_MAGIC = b"F32T"

# special tokens, ids fixed in this order
PAD_TOKEN = "[PAD]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
REV_TOKEN = "[REV]"
UNK_TOKEN = "[UNK]"
SPECIAL_TOKENS = [PAD_TOKEN, CLS_TOKEN, SEP_TOKEN, REV_TOKEN, UNK_TOKEN]

GELU_COEF = 0.044715
LAYER_NORM_EPS = 1e-6
NORM_EPS = 1e-12

DEFAULT_K_SET = [1, 5, 10, 50]
SUBSET_SIZE = 6
DEFAULT_N_GRID = [0, 1, 2, 3, 5, 10, 20, 50]

# completion retries: attempts and sleeps between them (seconds)
COMPLETION_ATTEMPTS = 3
COMPLETION_BACKOFF = [0.5, 1.0]
COMPLETION_TIMEOUT = 30

PROMPT_HEADER = "Rephrase the following texts:"

# rows scored per chunk during exact search
SEARCH_CHUNK_ROWS = 65536
