from .das import das_beamform
from .fds import FdsPlan, fds_beamform_ula, fds_beamform_upa
from .filters import FractionalDelayFilter, fractional_shift
