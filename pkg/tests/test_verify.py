import numpy as np

from dcp import verify
from dcp.tensor import Tensor


def sign_flip(x: Tensor) -> Tensor:
    """Forward identity whose backward negates the gradient (test sabotage)."""
    out = Tensor._node(x.values.copy(), (x,), None)

    def bw():
        x._accumulate(-out.grad)

    out._backward_fn = bw if out.requires_grad else None
    return out


def test_all_default_losses_pass():
    rows = verify.run_gradcheck(n_seeds=3)
    assert [r.loss for r in rows] == ["l_d", "l_g", "l_c1", "l_cc", "l_cs"]
    assert all(r.passed for r in rows)
    assert all(r.max_rel_error < r.threshold for r in rows)


def test_sign_flip_injection_fails_l_cc():
    def sabotaged(rng, d_f, k, n_b):
        return [
            (lambda t, f=f: f(sign_flip(t)), x)
            for f, x in verify._build_l_cc(rng, d_f, k, n_b)
        ]

    builders = dict(verify.LOSS_BUILDERS)
    builders["l_cc"] = sabotaged
    rows = {r.loss: r for r in verify.run_gradcheck(n_seeds=2, builders=builders)}
    assert not rows["l_cc"].passed
    assert rows["l_cc"].max_rel_error > 0.5
    assert rows["l_d"].passed


def test_csv_output_is_parseable():
    rows = verify.run_gradcheck(n_seeds=1)
    text = verify.rows_to_csv(rows)
    lines = text.strip().splitlines()
    assert lines[0] == "loss,max_rel_error,threshold,status"
    for line in lines[1:]:
        loss, err, threshold, status = line.split(",")
        float(err)
        float(threshold)
        assert status in ("PASS", "FAIL")


def test_instances_use_requested_shapes():
    rng = np.random.default_rng(0)
    for f, x in verify.LOSS_BUILDERS["l_cs"](rng, d_f=5, k=4, n_b=7):
        assert x.shape in ((4, 5), (7, 5))
        assert f(x).shape == (1, 1)
