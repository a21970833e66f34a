"""Train the small preset on the copy task and watch it generate.

Runs a few hundred steps (about two minutes on a laptop CPU) and prints the
loss curve plus a couple of greedy generations from the trained model.
"""

from tdt import Model, RngStream, desk_config, gen_copy_task
from tdt.training import eval_accuracy, train

cfg = desk_config()
model = Model(cfg, seed=0)
task = lambda rng: gen_copy_task(rng, (10, 10), cfg.vocab_size)

report = train(model, task, steps=600, seed=0, val_size=16)
losses = report.losses
print("loss:", "  ".join(f"{losses[i]:.3f}" for i in range(0, len(losses), 75)))
print("best validation step:", report.best_step)
print("validation metrics:  ", report.final_metrics)

rng = RngStream(123)
for i in range(3):
    inst = task(rng.split(i))
    out = model.generate(inst.source, max_len=len(inst.source) + 1)
    out = out[:-1] if out and out[-1] == 2 else out  # strip eos
    mark = "ok " if out == inst.target else "MISS"
    print(f"{mark} source={inst.source}")
    print(f"     output={out}")
