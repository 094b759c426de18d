from src.optim.sgd import SgdState, apply_schedule, cosine_anneal_lr, sgd_step

__all__ = ["SgdState", "apply_schedule", "cosine_anneal_lr", "sgd_step"]
