use elastosurf::galerkin::*;
use elastosurf::state::{build_initial_data, ElasticColumn, InitialData};
use elastosurf::*;
use proptest::prelude::*;

fn model(n: usize) -> Model64 {
    Model::new(make_grid(n, n, n + 1, 1.0).unwrap(), Params::new(0.5, 0.1, 1.0)).unwrap()
}

fn small_wave(m: &Model64) -> State64 {
    let g = &m.grid;
    let data = InitialData {
        psi0: g.surface_from_fn(|x, y| 0.01 * x.sin() + 0.005 * y.cos()),
        potential: Some([g.volume_zeros(), g.volume_from_fn(|x, y, z| 0.02 * (z + 1.0) * (x + y).sin()), g.volume_zeros()]),
        columns: [
            ElasticColumn { mean: [1.0, 0.0], stream: None },
            ElasticColumn { mean: [0.0, 1.0], stream: None },
            ElasticColumn::zero(),
        ],
    };
    build_initial_data(m, &data).unwrap()
}

fn triple() -> impl Strategy<Value = [f64; 3]> {
    [-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matrices_are_exactly_symmetric(v in triple(), f in triple(), n in triple(), lag in triple(), j in 0.05f64..3.0, dt in -1.0f64..1.0) {
        let p = BasicPoint { v, frak_f: f, normal: [n[0], n[1], 1.0], normal_lag: lag, d3phi: j, dtphi: dt };
        let a = assemble_matrices(&p).unwrap();
        prop_assert_eq!(a.asymmetry(), 0.0);
        prop_assert_eq!(a.a0()[0][0], 0.0);
        for i in 1..DIM {
            prop_assert_eq!(a.a0()[i][i], 1.0);
        }
    }

    #[test]
    fn modified_tensor_is_idempotent(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let m = model(16);
        let g = &m.grid;
        let psi = g.surface_from_fn(|x, y| 0.05 * (a * x.sin() + b * (x - y).cos()));
        let col = |s: f64| -> VecField<f64> {
            [
                g.volume_from_fn(move |x, _, z| 1.0 + s * c * x.cos() * (1.0 + z)),
                g.volume_from_fn(move |_, y, z| s * (2.0 * y).sin() * z * z),
                g.volume_from_fn(move |x, y, _| a * (x + y).cos() + s),
            ]
        };
        let f = [col(1.0), col(-0.5), col(0.25)];
        let once = modified_deformation(g, &m.cutoff, &f, &psi).unwrap();
        let twice = modified_deformation(g, &m.cutoff, &once, &psi).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                prop_assert!(twice[k][i].sub(&once[k][i]).max_abs() < 1e-12);
            }
            prop_assert!(boundary_defect(g, &once[k], &psi).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn extension_has_exact_trace(a in -1.0f64..1.0, b in -1.0f64..1.0, k in 1i32..5) {
        let m = model(16);
        let g = &m.grid;
        let k = k as f64;
        let h = g.surface_from_fn(|x, y| a * (k * x).cos() + b * (x + y).sin() + 0.3);
        let e = extension_operator(g, &m.cutoff, &h).unwrap();
        prop_assert!(e.top().sub(&h).max_abs() < 1e-12);
        prop_assert!(e.bottom().max_abs() < 1e-12);
    }
}

#[test]
fn singular_jacobian_is_refused() {
    let p = BasicPoint { v: [0.0; 3], frak_f: [0.0; 3], normal: [0.0, 0.0, 1.0], normal_lag: [0.0; 3], d3phi: 0.0, dtphi: 0.0 };
    assert!(assemble_matrices(&p).is_err());
}

#[test]
fn basis_ordering_and_orthonormality() {
    let m = model(16);
    let g = &m.grid;
    let basis = GalerkinBasis::new(g, 24).unwrap();
    assert_eq!(basis.dim(), 24);
    assert!(GalerkinBasis::new(g, 0).is_err());
    let f = g.volume_from_fn(|x, _, z| 0.5 + x.cos() * z);
    let p = basis.project(g, &f);
    assert!(basis.project(g, &p).sub(&p).max_abs() < 1e-11);
}

#[test]
fn projection_error_decreases_with_m() {
    let m = model(16);
    let g = &m.grid;
    let f = g.volume_from_fn(|x, y, z| (x + y).sin() * (1.0 + z).powi(2) + (2.0 * x).cos() * z);
    let errs: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&n| {
            let b = GalerkinBasis::new(g, n).unwrap();
            calculus::sobolev_norm_interior(g, &b.project(g, &f).sub(&f), 0).unwrap()
        })
        .collect();
    // nested spans: the error never grows, and this function lies in the 64-span
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
    assert!(errs[3] < 1e-12 && errs[2] < 0.5 * errs[0], "{errs:?}");
}

#[test]
fn galerkin_energy_is_controlled() {
    let m = model(16);
    let s = small_wave(&m);
    let basic = BasicState::snapshot(&m.grid, &s).unwrap();
    let mut pert = State::zeros(&m.grid);
    pert.psi = m.grid.surface_from_fn(|x, _| 1e-3 * x.cos());
    pert.v[0] = m.grid.volume_from_fn(|_, y, z| 1e-3 * y.sin() * (1.0 + z));
    let r = galerkin_evolve(&m, &basic, &pert, 8, 0.01, 0.2).unwrap();
    assert_eq!(r.times.len(), r.energy.len());
    let (c, rate) = fit_growth(&r.times, &r.energy).unwrap();
    assert!(c >= 1.0 && c < 1.5, "{c}");
    assert!(rate.abs() < 1.0, "{rate}");
    assert!(galerkin_evolve(&m, &basic, &pert, 8, 0.0, 0.2).is_err());
}

#[test]
fn growth_fit_recovers_exponentials() {
    let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
    let e: Vec<f64> = t.iter().map(|t| 2.0 * (0.7 * t).exp()).collect();
    let (c, r) = fit_growth(&t, &e).unwrap();
    assert!((r - 0.7).abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
    assert!(fit_growth(&[0.0], &[1.0]).is_none());
    assert!(fit_growth(&[0.0, 1.0], &[0.0, 1.0]).is_none());
}

#[test]
fn picard_contracts_on_short_intervals() {
    let m = model(16);
    let s = small_wave(&m);
    let r = picard_iterate(&m, &s, &PicardOptions::new(5, 0.05)).unwrap();
    assert!(r.breakdown.is_none());
    assert_eq!(r.rows.len(), 4);
    assert!(r.max_rho(3).unwrap() <= 0.5);
    assert!(r.boundary_defect < 1e-8);
    assert_eq!(PicardRow::HEADER, "n,E3_diff,rho,flag");
}

#[test]
fn picard_of_rest_is_rest() {
    let m = model(16);
    let rest = State::flat_rest(&m.grid, 1.0);
    let r = picard_iterate(&m, &rest, &PicardOptions::new(3, 0.05)).unwrap();
    let last = r.iterates.last().unwrap();
    assert!(last.v.iter().all(|f| f.max_abs() < 1e-12));
    assert!(last.psi.max_abs() < 1e-12);
}
