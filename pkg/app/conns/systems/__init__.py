from app.conns.systems.base_system import DynamicalSystem as DynamicalSystem
from app.conns.systems.base_system import eval_jacobian as eval_jacobian
from app.conns.systems.base_system import eval_rhs as eval_rhs
from app.conns.systems.kundur import KundurSystem as KundurSystem
from app.conns.systems.oscillators import CubicOscillator as CubicOscillator
from app.conns.systems.oscillators import HopfNormalForm as HopfNormalForm
from app.conns.systems.oscillators import LinearSystem as LinearSystem
from app.conns.systems.registry import SYSTEM_REGISTRY as SYSTEM_REGISTRY
from app.conns.systems.registry import load_system_file as load_system_file
from app.conns.systems.registry import make_system as make_system
from app.conns.systems.registry import register_system as register_system
from app.conns.systems.sampler import InitialConditionSampler as InitialConditionSampler
from app.conns.systems.sampler import sample_initial_condition as sample_initial_condition
