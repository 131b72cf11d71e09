"""User encoder: news-level attention pooling over browsed-news vectors."""

from dataclasses import dataclass

import numpy as np

from .news_encoder import additive_attention, mean_pool
from .tensor import Tensor


@dataclass
class UserVector:
    u: Tensor
    alpha: Tensor


def encode_user(history, history_len, params, cfg):
    """Pool history vectors [..., N_max, N_f] into user vectors [..., N_f].

    Slots at or beyond ``history_len`` are padding and get weight 0. An empty
    history yields the zero vector.
    """
    lengths = np.asarray(history_len)
    n_max = history.shape[-2]
    mask = np.arange(n_max) < lengths[..., None]
    if cfg.news_attention:
        u, alpha = additive_attention(
            history, mask, params["user.att.proj_w"], params["user.att.proj_b"], params["user.att.query"]
        )
    else:
        u, alpha = mean_pool(history, mask)
    return UserVector(u, alpha)
