"""Counting how often the assembly code is entered.

A separated model needs exactly d^z full matrices; replaying a saved model
needs none. Extra calls, simulated here, are caught by the audit.
"""

import json

from parasep import experiments

config = experiments.load_config("paper-1d")
config["output_dir"] = "results/audit-demo"
report = experiments.audit(config)
print(json.dumps({k: report[k] for k in ("dz", "full_calls_offline", "split_calls", "full_calls_replay")}))

try:
    experiments.audit(config, fault=lambda provider: provider(2.0))
except experiments.AuditViolation as exc:
    print(f"violation detected: {exc}")
