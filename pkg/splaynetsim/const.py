PKG_NAME = "splaynetsim"

# buffers
BUFFER_CAPACITY = 15

# detectors
STALL_WINDOW = 9 * BUFFER_CAPACITY
LOOP_WINDOW = 4
BOUND_EPSILON = 1e-9

# timeout: BASE_TIMEOUT + TIMEOUT_FACTOR * m * ceil(log2 n) * ceil(log2(m + 1))
BASE_TIMEOUT = 10_000
TIMEOUT_FACTOR = 200

DEFAULT_SEED = 0
DEFAULT_ALPHA = 1.2

# results store
SQLITE_DIALECT = "sqlite"
DEFAULT_DSN = "sqlite://"
TEST_DSN_KEY = "SPLAYNETSIM_TEST_DSN"

# workload kinds
WORKLOAD_UNIFORM = "uniform"
WORKLOAD_ZIPF = "zipf"
WORKLOAD_PRODUCT = "product"
WORKLOAD_TRACE = "trace"
WORKLOAD_KINDS = (WORKLOAD_UNIFORM, WORKLOAD_ZIPF, WORKLOAD_PRODUCT, WORKLOAD_TRACE)

ARRIVAL_ALL_AT_ONCE = "all-at-once"
ARRIVAL_POISSON = "poisson"

# termination
TERMINATION_COMPLETED = "completed"
TERMINATION_TIMEOUT = "timeout"
TERMINATION_DETECTOR = "detector_fired"

# event log
EVENT_SPLAY_ISSUE = "splay-issue"
EVENT_SPLAY_FORWARD = "splay-forward"
EVENT_SPLAY_ACCEPT = "splay-accept"
EVENT_SPLAY_COMPLETE = "splay-complete"
EVENT_BETA_REQUEST = "beta-request"
EVENT_BETA_FORWARD = "beta-forward"
EVENT_LOCK_REQUEST = "lock-request"
EVENT_LOCK_ACK = "lock-ack"
EVENT_COMMIT = "commit"
EVENT_FREE = "free"
EVENT_LINK_CHANGE = "link-change"
EVENT_BUFFER_CHANGE = "buffer-change"
EVENT_ABORT = "abort"
EVENT_DROP = "drop"
EVENT_LCA_WAIT = "lca-wait"
EVENT_RESUME = "resume"
EVENT_DETECTOR = "detector"

EVENT_LOG_HEADER = "slot,node,event,detail"

# reports
AGG_MEAN = "mean"
CSV_COLUMNS = [
    "n",
    "m",
    "workload",
    "seed",
    "rotations",
    "rounds",
    "timeslots",
    "H_src",
    "H_dst",
    "D",
    "rot_per_m",
    "rounds_per_m",
    "slots_per_m",
    "rot_per_m_log_n",
    "rot_per_entropy",
    "slots_per_m_log_n_log_m",
    "agg",
]
OUTPUT_FORMATS = ("csv", "json")

# cli exit codes
EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2
EXIT_DETECTOR = 3
