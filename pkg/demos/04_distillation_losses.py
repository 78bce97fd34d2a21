"""The training signal a completed-frame teacher hands to a raw-frame student.

Builds toy detection-head and backbone tensors, projects the student's
features to the teacher's channel count and prints the loss breakdown. A
student that copies the teacher scores only its own detection loss.

    python demos/04_distillation_losses.py
"""

import numpy as np

from xray_fusion.distill import DistillationConfig, distillation_loss, project_channels


def main():
    rng = np.random.default_rng(0)
    h = w = 8
    t_cls = rng.dirichlet(np.ones(3), size=(h, w))
    s_cls = rng.dirichlet(np.ones(3), size=(h, w))
    t_reg, s_reg = rng.normal(size=(2, h, w, 7))
    t_feat = rng.normal(size=(64, h, w))
    s_feat = rng.normal(size=(32, h, w))

    proj = rng.normal(size=(64, 32)) / np.sqrt(32)
    out = distillation_loss(s_cls, t_cls, s_reg, t_reg, t_feat, project_channels(s_feat, proj), l_det=1.2)
    for key, value in out.to_dict().items():
        print(f"{key:9s} {value:.5f}")

    named = distillation_loss(s_cls, t_cls, s_reg, t_reg, t_feat, project_channels(s_feat, proj), 1.2,
                              DistillationConfig(heads_pairing="named"))
    print(f"weights paired by name instead: total {named.total:.5f}")

    copy = distillation_loss(t_cls, t_cls, t_reg, t_reg, t_feat, t_feat, l_det=1.2)
    print(f"student equal to teacher: total {copy.total:.5f} (only the detection term)")


if __name__ == "__main__":
    main()
