use nalgebra::{DMatrix, DVector};
use plateau_core::desitter::DeSitterPoint;
use plateau_core::geometry::PointGeometry;
use plateau_core::linalg::BlockBanded;
use plateau_core::{parse_spec, Cap, CurvatureSpec};
use proptest::prelude::*;

const SPECS: [&str; 6] = ["mean", "gauss", "quotient:2,1", "power_mean:1", "blend:0.3,gauss", "dual:mean"];

fn spec(i: usize) -> CurvatureSpec {
    parse_spec(SPECS[i], 2).unwrap()
}

fn cone_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2).prop_map(|v| v.into_iter().map(|x| 10f64.powf(x)).collect())
}

/// Random graph data with `A[u]` positive definite.
fn convex_jet() -> impl Strategy<Value = (DVector<f64>, f64, DVector<f64>, DMatrix<f64>)> {
    (
        prop::array::uniform2(-0.5f64..0.5),
        0.05f64..0.6,
        prop::array::uniform2(-1.5f64..1.5),
        prop::array::uniform3(-2.0f64..0.5),
    )
        .prop_map(|(x, u, du, h)| {
            let d2u = DMatrix::from_row_slice(2, 2, &[h[0], 0.3 * h[2], 0.3 * h[2], h[1]]);
            (DVector::from_column_slice(&x), u, DVector::from_column_slice(&du), d2u)
        })
}

proptest! {
    #[test]
    fn curvature_functions_are_symmetric_homogeneous_and_monotone(k in cone_point(), t in 0.1f64..10.0, i in 0usize..6) {
        let f = spec(i);
        let v = f.value(&k).unwrap();
        prop_assert!((f.value(&[k[1], k[0]]).unwrap() - v).abs() <= 1e-12 * v);
        let scaled: Vec<f64> = k.iter().map(|x| t * x).collect();
        prop_assert!((f.value(&scaled).unwrap() - t * v).abs() <= 1e-11 * t * v);
        let bumped = [k[0] * 1.01, k[1]];
        prop_assert!(f.value(&bumped).unwrap() > v);
        prop_assert!(v <= k[0].max(k[1]) * (1.0 + 1e-12) && v >= k[0].min(k[1]) * (1.0 - 1e-12));
    }

    #[test]
    fn curvature_functions_are_concave(a in cone_point(), b in cone_point(), i in 0usize..6) {
        let f = spec(i);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let chord = 0.5 * (f.value(&a).unwrap() + f.value(&b).unwrap());
        prop_assert!(f.value(&mid).unwrap() >= chord * (1.0 - 1e-12));
    }

    #[test]
    fn dual_function_inverts_reciprocals(k in cone_point(), i in 0usize..6) {
        let f = spec(i);
        let inv: Vec<f64> = k.iter().map(|x| 1.0 / x).collect();
        let d = f.clone().dual().value(&inv).unwrap();
        prop_assert!((d * f.value(&k).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_and_euclidean_curvatures_are_related((x, u, du, d2u) in convex_jet()) {
        let g = PointGeometry::new(x, u, du, d2u).unwrap();
        for (k, ke) in g.kappa.iter().zip(&g.kappa_e) {
            prop_assert!((k - (u * ke + g.nu)).abs() < 1e-12);
        }
        let pencil = g.tensors().principal_curvatures().unwrap();
        for (a, b) in pencil.iter().zip(&g.kappa) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn hodograph_inverts_curvatures((x, u, du, d2u) in convex_jet()) {
        let g = PointGeometry::new(x.clone(), u, du.clone(), d2u.clone()).unwrap();
        prop_assume!(g.kappa_min() > 0.05);
        let Some(p) = DeSitterPoint::new(&x, u, &du, &d2u) else { return Ok(()) };
        prop_assert!(p.legendre_defect().abs() < 1e-12);
        prop_assert!(p.grad_v.norm() < 1.0);
        let ks = p.curvatures().unwrap();
        for (a, b) in ks.iter().zip(g.kappa.iter().rev()) {
            prop_assert!((a * b - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn caps_are_umbilic(sigma in 0.05f64..0.95, r in 0.5f64..2.0, t in 0.0f64..0.9, angle in 0.0f64..6.3) {
        let cap = Cap::new(sigma, r);
        let rad = t * cap.domain_radius();
        let x = DVector::from_column_slice(&[rad * angle.cos(), rad * angle.sin()]);
        let g = PointGeometry::new(x.clone(), cap.u(&x), cap.du(&x), cap.d2u(&x)).unwrap();
        for k in &g.kappa {
            prop_assert!((k - sigma).abs() < 1e-10);
        }
        prop_assert!((g.eta(sigma) - cap.eta()).abs() < 1e-9 / cap.u(&x).min(1.0));
    }

    #[test]
    fn matched_caps_hit_the_boundary(sigma in 0.05f64..0.95, rho in 0.1f64..2.0, eps in 0.0f64..0.2) {
        let cap = Cap::matched(sigma, rho, eps);
        let x = DVector::from_column_slice(&[0.0, rho]);
        prop_assert!((cap.u(&x) - eps).abs() < 1e-12);
    }

    #[test]
    fn banded_solve_inverts_product(seed in prop::collection::vec(-1.0f64..1.0, 400), nb in 3usize..7) {
        let b = 2;
        let mut m = BlockBanded::zeros(nb, b, 3, 2);
        let mut vals = seed.iter().cycle();
        for i in 0..nb * b {
            for j in 0..nb * b {
                let (bi, bj) = (i / b, j / b);
                if bj + 3 >= bi && bj <= bi + 2 {
                    let v = *vals.next().unwrap() + if i == j { 8.0 } else { 0.0 };
                    m.add(i, j, v);
                }
            }
        }
        let x = DVector::from_iterator(nb * b, seed.iter().rev().copied().take(nb * b));
        let y = m.mul_vec(&x);
        let back = m.solve(&y).unwrap();
        prop_assert!((back - x).abs().max() < 1e-10);
    }
}
