"""Smoke test for the Python bindings.

Build and install first, e.g. `pip install ./crates/python`, then run
`python python/smoke_test.py`.
"""

import eigen_factors_py as ef


def main():
    xi = [0.1, -0.2, 0.3, 1.0, 2.0, -0.5]
    back = ef.log(ef.exp(xi))
    assert max(abs(a - b) for a, b in zip(xi, back)) < 1e-12

    normal, d, cost = ef.fit_plane([[0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]])
    assert abs(abs(normal[2]) - 1) < 1e-12 and abs(abs(d) - 1) < 1e-12 and cost < 1e-20

    ds = ef.Dataset.generate(seed=4)
    assert ds.n_poses == 10 and ds.n_planes == 10
    assert ef.Dataset.from_json(ds.to_json()).to_json() == ds.to_json()

    result = ds.optimize()
    costs = result["costs"]
    assert result["status"] == "converged", result["status"]
    assert all(b <= a for a, b in zip(costs, costs[1:]))
    assert result["final_cost"] <= 1.1 * ds.cost(ds.gt_trajectory)

    before = ef.rpe(ds.gt_trajectory, ds.initial_trajectory)
    after = ef.rpe(ds.gt_trajectory, result["trajectory"])
    assert after[0] <= before[0] and after[1] <= before[1]

    mme_before, mpv_before, _ = ef.map_metrics(ds.aggregate(ds.initial_trajectory))
    mme_after, mpv_after, _ = ef.map_metrics(ds.aggregate(result["trajectory"]))
    assert mme_after <= mme_before and mpv_after <= mpv_before

    checks = ef.check_derivatives(trials=2)
    assert checks["passed"], checks

    print(f"cost {result['initial_cost']:.4f} -> {result['final_cost']:.4f} in {result['iterations']} iterations")
    print(f"rpe trans {before[0]:.4f} -> {after[0]:.4f} m, rot {before[1]:.3f} -> {after[1]:.3f} deg")
    print(f"mpv {mpv_before:.4f} -> {mpv_after:.4f} m, mme {mme_before:.3f} -> {mme_after:.3f}")
    print("smoke test passed")


if __name__ == "__main__":
    main()
