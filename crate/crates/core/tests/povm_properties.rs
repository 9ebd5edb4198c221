//! Pixel-POVM properties checked against dense constructions.

use hyperqst::coupler::{ic_check, lift_povm, lifted_element_dense, CouplerUnitary, PovmSet};
use hyperqst::linalg::{frobenius, identity, kron, CMat, C64};
use hyperqst::measurement::Measurement;
use hyperqst::modes::{build_constant_order_basis, BeamGeometry, LgModeSpec, ModeBasis, PixelGrid};
use hyperqst::state::{partial_trace_nonspatial, random_state, DimensionSpec};

fn grid(side: usize) -> PixelGrid {
    PixelGrid::new(side, 4.5).unwrap()
}

fn order14(count: usize, side: usize) -> ModeBasis {
    build_constant_order_basis(14, count, BeamGeometry::default(), grid(side)).unwrap()
}

/// Modes `l = 0, 1, …, count−1` at `p = 0`: every `|l|` distinct, so pixel
/// intensities separate all products `f_a*·f_b`.
fn distinct_l(count: usize, side: usize) -> ModeBasis {
    let specs: Vec<LgModeSpec> = (0..count as i32).map(|l| LgModeSpec::new(l, 0)).collect();
    ModeBasis::from_specs(&specs, grid(side)).unwrap()
}

/// Small configurations with `d·m ≤ 8` and `D·m ≤ 16`.
fn small_dims() -> Vec<DimensionSpec> {
    let mut out = Vec::new();
    for d in 1..=4 {
        for m in 1..=4 {
            for lifted in d..=8 {
                if d * m <= 8 && lifted * m <= 16 {
                    out.push(DimensionSpec::new(d, m, lifted).unwrap());
                }
            }
        }
    }
    out
}

/// `U_in† (P ⊗ I_m) U_in` with the Kronecker product formed explicitly.
fn dense_element(u: &CMat, basis: &ModeBasis, pixel: usize, dims: DimensionSpec) -> CMat {
    let v = basis.pixel_state(pixel);
    let projector = &v * v.adjoint();
    let u_in = u.columns(0, dims.state_dim()).into_owned();
    let lifted = kron(&projector, &identity(dims.m));
    (u_in.adjoint() * lifted * u_in).scale(basis.grid().pixel_area())
}

#[test]
fn factored_elements_match_dense_kronecker() {
    for (n, dims) in small_dims().into_iter().enumerate() {
        let basis = order14(dims.lifted, 8);
        let coupler = CouplerUnitary::haar(dims, n as u64);
        let povm = lift_povm(&coupler, &basis).unwrap();
        for pixel in [0, 9, 27, 36, 63] {
            let factored = povm.element(pixel);
            let dense = dense_element(coupler.matrix(), &basis, pixel, dims);
            let sandwich = lifted_element_dense(&coupler, &basis, pixel).unwrap();
            let scale = frobenius(&dense).max(1e-300);
            assert!(frobenius(&(&factored - &dense)) <= 1e-12 * scale.max(1.0), "{dims:?} pixel {pixel}");
            assert!(frobenius(&(&sandwich - &dense)) <= 1e-12 * scale.max(1.0), "{dims:?} pixel {pixel}");
        }
    }
}

/// `Tr(ρ Π_i) = 𝒮·⟨r_i| Tr_m(U ρ̃ U†) |r_i⟩` with `ρ̃` the state padded with
/// empty ancilla modes.
#[test]
fn pixel_probability_equals_partial_trace_of_coupled_state() {
    for (n, dims) in small_dims().into_iter().enumerate().step_by(3) {
        let basis = order14(dims.lifted, 12);
        let coupler = CouplerUnitary::haar(dims, 1000 + n as u64);
        let povm = lift_povm(&coupler, &basis).unwrap();
        let rho = random_state(dims.state_dim(), dims.state_dim(), n as u64).unwrap();

        let big = dims.lifted_dim();
        let mut padded = CMat::zeros(big, big);
        padded.view_mut((0, 0), (dims.state_dim(), dims.state_dim())).copy_from(rho.matrix());
        let u = coupler.matrix();
        let spatial = partial_trace_nonspatial(&(u * padded * u.adjoint()), dims.lifted, dims.m).unwrap();

        let probs = povm.expectations(rho.matrix());
        let area = basis.grid().pixel_area();
        for (k, p) in probs.iter().enumerate() {
            let v = basis.pixel_state(k);
            let direct: C64 = (v.adjoint() * &spatial * &v)[(0, 0)];
            assert!((p - area * direct.re).abs() < 1e-10, "{dims:?} pixel {k}");
            assert!(direct.im.abs() < 1e-10);
        }
    }
}

#[test]
fn completeness_on_a_fine_grid() {
    for (d, m, lifted) in [(2, 2, 8), (2, 1, 15), (3, 2, 10)] {
        let dims = DimensionSpec::new(d, m, lifted).unwrap();
        let povm = lift_povm(&CouplerUnitary::haar(dims, 5), &order14(lifted, 128)).unwrap();
        let err = povm.completeness_error();
        assert!(err <= 1e-2, "{dims:?}: {err}");
    }
}

fn rank(povm: &PovmSet) -> usize {
    ic_check(povm).rank
}

#[test]
fn haar_couplers_with_an_ancilla_are_ic_on_a_separating_family() {
    for dims in small_dims() {
        if dims.lifted < dims.state_dim() + 1 {
            continue;
        }
        let povm = lift_povm(&CouplerUnitary::haar(dims, 77), &distinct_l(dims.lifted, 32)).unwrap();
        let report = ic_check(&povm);
        assert_eq!(report.rank, dims.state_dim().pow(2), "{dims:?}");
        assert!(report.is_ic && report.smallest_singular_value > 0.0);
    }
}

#[test]
fn too_few_lifted_modes_are_never_ic() {
    for dims in small_dims() {
        if dims.lifted >= dims.state_dim() {
            continue;
        }
        for basis in [distinct_l(dims.lifted, 32), order14(dims.lifted, 32)] {
            let povm = lift_povm(&CouplerUnitary::haar(dims, 78), &basis).unwrap();
            let report = ic_check(&povm);
            assert!(report.rank < dims.state_dim().pow(2), "{dims:?}");
            assert!(!report.is_ic);
            assert_eq!(report.smallest_singular_value, 0.0);
        }
    }
}

#[test]
fn opposite_oam_modes_leave_the_bare_camera_non_ic() {
    let specs: Vec<LgModeSpec> = [(1, 0), (-1, 0)].iter().map(|&(l, p)| LgModeSpec::new(l, p)).collect();
    let basis = ModeBasis::from_specs(&specs, grid(32)).unwrap();
    let dims = DimensionSpec::new(2, 1, 2).unwrap();
    let bare = lift_povm(&CouplerUnitary::identity(dims), &basis).unwrap();
    assert!(rank(&bare) < 4);

    let lifted = ModeBasis::from_specs(
        &[(1, 0), (-1, 0), (0, 0), (2, 0)].map(|(l, p)| LgModeSpec::new(l, p)),
        grid(32),
    )
    .unwrap();
    let dims = DimensionSpec::new(2, 1, 4).unwrap();
    assert_eq!(rank(&lift_povm(&CouplerUnitary::haar(dims, 3), &lifted).unwrap()), 4);
}

#[test]
fn opposite_oam_superpositions_give_identical_images() {
    let specs: Vec<LgModeSpec> = [(1, 0), (-2, 0), (-1, 0), (2, 0)].iter().map(|&(l, p)| LgModeSpec::new(l, p)).collect();
    let basis = ModeBasis::from_specs(&specs, grid(32)).unwrap();
    let dims = DimensionSpec::new(4, 1, 4).unwrap();
    let bare = lift_povm(&CouplerUnitary::identity(dims), &basis).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let state = |a: usize, b: usize| {
        let mut psi = vec![C64::new(0.0, 0.0); 4];
        psi[a] = C64::new(h, 0.0);
        psi[b] = C64::new(h, 0.0);
        hyperqst::state::DensityMatrix::pure(&psi).unwrap()
    };
    let pa = bare.expectations(state(0, 1).matrix());
    let pb = bare.expectations(state(2, 3).matrix());
    let diff = pa.iter().zip(&pb).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-10, "{diff}");
}
