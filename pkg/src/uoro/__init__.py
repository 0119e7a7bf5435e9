"""Online recurrent learning: UORO, RTRL and truncated BPTT on synthetic tasks."""

__version__ = "0.1.0"

from .algorithms import (  # noqa: E402
    RTRL, UORO, MemoryUORO, RankUORO, StepResult, TbpttBuffer, TruncatedBPTT, UoroState,
    composite_uoro_update, rtrl_step, tbptt_step, uoro_step,
)
from .core import CounterRng, draw_signs, enumerate_all_signs, l2_norm, outer  # noqa: E402
from .models import GRU, LSTM, InfluenceBalancing, TanhRNN  # noqa: E402
from .rankone import reduce, variance_min_rho  # noqa: E402
