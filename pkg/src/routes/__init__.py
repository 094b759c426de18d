from src.routes.diagnostics import frontier_command, gradcheck_command
from src.routes.evaluation import eval_command
from src.routes.training import train_command

COMMANDS = [train_command, eval_command, gradcheck_command, frontier_command]

__all__ = ["COMMANDS", "eval_command", "frontier_command", "gradcheck_command", "train_command"]
