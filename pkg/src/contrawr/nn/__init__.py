from .autodiff import Tensor, no_grad
from .gradcheck import finite_difference_check
from .layers import ContraWRNet, Encoder, EncoderConfig, Projector, encode, project
from .optim import AdamState, adam_step
