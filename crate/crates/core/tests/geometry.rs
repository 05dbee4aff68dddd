use elastosurf::geometry::{cutoff_chi, surface_normals};
use elastosurf::*;

fn model(kappa: f64) -> Model64 {
    Model::new(make_grid(16, 16, 17, 1.0).unwrap(), Params::new(0.5, kappa, 1.0)).unwrap()
}

#[test]
fn cutoff_plateaus_and_slope() {
    let c: Cutoff<f64> = Cutoff::new(1.0, 0.0, None).unwrap();
    assert_eq!(c.chi(-1.0), 0.0);
    assert_eq!(c.chi(0.0), 1.0);
    assert_eq!(c.dchi(-1.0), 0.0);
    assert_eq!(c.dchi(0.0), 0.0);
    assert!((c.chi(-0.5) - 0.5).abs() < 1e-15);
    assert!((c.dchi(-0.5) - c.max_slope()).abs() < 1e-14);
    assert!((c.max_slope() - 1.875).abs() < 1e-15);

    let narrow: Cutoff<f64> = Cutoff::new(2.0, 0.5, None).unwrap();
    assert_eq!(narrow.chi(-1.8), 0.0);
    assert_eq!(narrow.chi(-0.2), 1.0);
    assert!((narrow.ramp_length() - 1.0).abs() < 1e-15);
}

#[test]
fn cutoff_rejects_bad_parameters() {
    assert!(Cutoff::<f64>::new(1.0, 0.5, None).is_err());
    assert!(Cutoff::<f64>::new(1.0, -0.1, None).is_err());
    assert!(Cutoff::<f64>::new(0.0, 0.0, None).is_err());
    assert!(Cutoff::<f64>::new(1.0, 0.0, Some(1.0)).is_err());
    assert!(Cutoff::<f64>::new(1.0, 0.0, Some(2.0)).is_ok());
    assert!(cutoff_chi(-0.5, 1.0, 0.0, Some(0.75)).is_err());
}

#[test]
fn flat_surface_gives_identity_map() {
    let m = model(0.1);
    let g = &m.grid;
    let geom = m.geometry(&g.surface_zeros(), &g.surface_zeros()).unwrap();
    let z = g.volume_from_fn(|_, _, z| z);
    assert!(geom.phi.sub(&z).max_abs() < 1e-14);
    assert!((geom.min_d3phi() - 1.0).abs() < 1e-12);
    assert!(geom.d1phi.max_abs() < 1e-14 && geom.dtphi.max_abs() < 1e-14);
    let flat = Geometry::flat(g, &m.cutoff);
    assert!(flat.d3phi.sub(&geom.d3phi).max_abs() < 1e-12);
}

#[test]
fn phi_matches_the_surface_on_top() {
    let m = model(0.1);
    let g = &m.grid;
    let psi = g.surface_from_fn(|x, y| 0.1 * (x + y).sin() + 0.05 * (2.0 * x).cos());
    let geom = m.geometry(&psi, &g.surface_zeros()).unwrap();
    assert!(geom.phi.top().sub(&psi).max_abs() < 1e-12);
    let bottom = geom.phi.bottom();
    assert!(bottom.map(|x| x + 1.0).max_abs() < 1e-12);
    assert!(geom.min_d3phi() > 0.5);
}

#[test]
fn normals_of_a_tilted_wave() {
    let g = make_grid::<f64>(16, 16, 9, 1.0).unwrap();
    let psi = g.surface_from_fn(|x, _| 0.2 * x.sin());
    let (n, len) = surface_normals(&g, &psi).unwrap();
    let want = g.surface_from_fn(|x, _| -0.2 * x.cos());
    assert!(n[0].sub(&want).max_abs() < 1e-12);
    assert!(n[1].max_abs() < 1e-12);
    assert!(n[2].sub(&g.surface_from_fn(|_, _| 1.0)).max_abs() < 1e-15);
    let len_want = g.surface_from_fn(|x, _| (1.0 + 0.04 * x.cos().powi(2)).sqrt());
    assert!(len.sub(&len_want).max_abs() < 1e-12);
}

#[test]
fn large_surfaces_are_rejected() {
    let m = model(0.1);
    let g = &m.grid;
    let psi = g.surface_from_fn(|x, _| 0.6 * x.sin());
    assert!(matches!(m.geometry(&psi, &g.surface_zeros()), Err(Error::AmplitudeTooLarge { .. })));
}
