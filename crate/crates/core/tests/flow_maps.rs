use approx::assert_abs_diff_eq;
use hypnf::flow::{integrate, variational_flow, FlowOptions};
use hypnf::homological::FlatFunction;
use hypnf::io::HamiltonianSpec;
use hypnf::smooth::Hamiltonian;
use hypnf::symplectic::symplectic_defect;
use nalgebra::DMatrix;

fn cubic_saddle() -> Hamiltonian {
    let spec = HamiltonianSpec::parse(
        r#"{"n": 1, "N": 3, "terms": [
            {"alpha": [1], "beta": [1], "coeff": 1.0},
            {"alpha": [2], "beta": [1], "coeff": 0.5},
            {"alpha": [1], "beta": [2], "coeff": 0.5}]}"#,
    )
    .unwrap();
    spec.hamiltonian().unwrap()
}

fn two_dof() -> Hamiltonian {
    let spec = HamiltonianSpec::parse(
        r#"{"n": 2, "N": 4, "terms": [
            {"alpha": [1, 0], "beta": [1, 0], "coeff": 1.0},
            {"alpha": [0, 1], "beta": [0, 1], "coeff": 2.0},
            {"alpha": [2, 0], "beta": [1, 1], "coeff": 0.25},
            {"alpha": [1, 1], "beta": [1, 0], "coeff": -0.5}]}"#,
    )
    .unwrap();
    spec.hamiltonian().unwrap()
}

fn last_dkappa(h: &Hamiltonian, y: &[f64], t: f64) -> (Vec<f64>, DMatrix<f64>) {
    let traj = variational_flow(h, y, t, &FlowOptions::with_tol(1e-12)).unwrap();
    let dk = traj.dkappa.as_ref().unwrap().last().unwrap().clone();
    (traj.final_state().to_vec(), dk)
}

#[test]
fn variational_matrix_matches_finite_differences() {
    let h = two_dof();
    let y = [0.1, -0.05, 0.08, 0.03];
    let (_, dk) = last_dkappa(&h, &y, 0.7);
    let opts = FlowOptions::with_tol(1e-13);
    let eps = 1e-6;
    for j in 0..4 {
        let mut yp = y;
        let mut ym = y;
        yp[j] += eps;
        ym[j] -= eps;
        let fp = integrate(&h, &yp, 0.7, &opts).unwrap();
        let fm = integrate(&h, &ym, 0.7, &opts).unwrap();
        for i in 0..4 {
            let fd = (fp.final_state()[i] - fm.final_state()[i]) / (2.0 * eps);
            assert_abs_diff_eq!(dk[(i, j)], fd, epsilon = 1e-6);
        }
    }
}

#[test]
fn variational_matrix_is_symplectic_with_unit_determinant() {
    let h = two_dof();
    let (_, dk) = last_dkappa(&h, &[0.05, 0.1, -0.1, 0.02], 1.5);
    assert!(symplectic_defect(&dk) < 1e-9);
    assert_abs_diff_eq!(dk.determinant(), 1.0, epsilon = 1e-9);
}

#[test]
fn flows_compose() {
    let h = cubic_saddle();
    let y = [0.1, 0.2];
    let (mid, dk1) = last_dkappa(&h, &y, 0.4);
    let (end, dk2) = last_dkappa(&h, &mid, 0.6);
    let (direct, dk) = last_dkappa(&h, &y, 1.0);
    for i in 0..2 {
        assert_abs_diff_eq!(end[i], direct[i], epsilon = 1e-10);
    }
    assert!((&dk2 * &dk1 - &dk).amax() < 1e-9);
}

#[test]
fn backward_flow_inverts_forward_flow() {
    let h = cubic_saddle();
    let opts = FlowOptions::with_tol(1e-12);
    let fwd = integrate(&h, &[0.15, -0.1], 0.8, &opts).unwrap();
    let back = integrate(&h, fwd.final_state(), -0.8, &opts).unwrap();
    assert_abs_diff_eq!(back.final_state()[0], 0.15, epsilon = 1e-10);
    assert_abs_diff_eq!(back.final_state()[1], -0.1, epsilon = 1e-10);
}

#[test]
fn energy_is_conserved_and_error_bound_covers_truth() {
    // p = x ξ has the explicit flow (x eᵗ, ξ e⁻ᵗ)
    let h = Hamiltonian::from_jet(hypnf::jet::Jet::monomial(1, 2, &[1], &[1], 1.0));
    let traj = integrate(&h, &[0.3, 0.4], 2.0, &FlowOptions::with_tol(1e-8)).unwrap();
    let y = traj.final_state();
    let err = (y[0] - 0.3 * 2f64.exp()).abs().max((y[1] - 0.4 * (-2f64).exp()).abs());
    assert!(err <= traj.error_bound(1.0), "{err} > {}", traj.error_bound(1.0));
    assert!(traj.max_energy_drift < 1e-8);
}

#[test]
fn flat_remainder_barely_moves_trajectories_near_origin() {
    let spec = HamiltonianSpec::parse(
        r#"{"n": 1, "N": 2, "terms": [{"alpha": [1], "beta": [1], "coeff": 1.0}]}"#,
    )
    .unwrap();
    let plain = spec.hamiltonian().unwrap();
    let r = FlatFunction::monomial_bump(&[3], &[5], 1e-3, 0.9, 3);
    let perturbed = plain.clone().with_remainder(r.function().clone());
    let opts = FlowOptions::with_tol(1e-12);
    let a = integrate(&plain, &[0.05, 0.05], 1.0, &opts).unwrap();
    let b = integrate(&perturbed, &[0.05, 0.05], 1.0, &opts).unwrap();
    let d = (a.final_state()[0] - b.final_state()[0]).abs();
    // |∇r| ≤ 5e-3·|x|³|ξ|⁴ ≈ 8e-11 along the path, amplified by at most e over unit time
    assert!(d > 0.0 && d < 8e-11 * std::f64::consts::E, "{d}");
}
