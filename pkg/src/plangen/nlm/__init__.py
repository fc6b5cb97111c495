from . import autodiff
from .layers import expand, permute_stack, permuted_linear, reduce
from .model import (
    NLM,
    NLMConfig,
    PolicyOutput,
    load_into,
    policy_head,
    policy_logits,
    read_checkpoint,
    save_checkpoint,
    value_head,
)
from .optim import Adam

__all__ = [
    "autodiff", "expand", "permute_stack", "permuted_linear", "reduce",
    "NLM", "NLMConfig", "PolicyOutput", "load_into", "policy_head", "policy_logits",
    "read_checkpoint", "save_checkpoint", "value_head", "Adam",
]
