use hypnf::io::{jet_from_json, jet_to_json};
use hypnf::jet::{poisson, Jet, Monomial};
use num_rational::BigRational;
use proptest::prelude::*;

const N: usize = 2;
const ORDER: usize = 6;

fn rational() -> impl Strategy<Value = BigRational> {
    (-9i64..=9, 1i64..=6).prop_map(|(p, q)| BigRational::new(p.into(), q.into()))
}

/// Random rational jets of low degree so products stay inside `ORDER`.
fn jet(max_deg: u16) -> impl Strategy<Value = Jet<BigRational>> {
    let term = (prop::collection::vec(0..=max_deg, 2 * N), rational());
    prop::collection::vec(term, 0..5).prop_map(move |terms| {
        let mut j = Jet::zero(N, ORDER);
        for (e, c) in terms {
            let m = Monomial::new(e);
            if m.degree() <= usize::from(max_deg) && m.degree() > 0 {
                j.add_term(m, c);
            }
        }
        j
    })
}

proptest! {
    #[test]
    fn ring_axioms(a in jet(2), b in jet(2), c in jet(2)) {
        prop_assert_eq!(a.add(&b), b.add(&a));
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert!(a.sub(&a).is_zero());
    }

    #[test]
    fn poisson_bracket_is_antisymmetric_and_satisfies_jacobi(
        f in jet(2), g in jet(2), h in jet(2)
    ) {
        let fg = poisson(&f, &g).unwrap();
        let gf = poisson(&g, &f).unwrap();
        prop_assert!(fg.add(&gf).is_zero());
        let cyc = poisson(&f, &poisson(&g, &h).unwrap()).unwrap()
            .add(&poisson(&g, &poisson(&h, &f).unwrap()).unwrap())
            .add(&poisson(&h, &poisson(&f, &g).unwrap()).unwrap());
        prop_assert!(cyc.is_zero(), "Jacobi defect {:?}", cyc);
    }

    #[test]
    fn leibniz_rule(f in jet(2), g in jet(2), h in jet(2)) {
        let lhs = poisson(&f, &g.mul(&h)).unwrap();
        let rhs = poisson(&f, &g).unwrap().mul(&h).add(&g.mul(&poisson(&f, &h).unwrap()));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn json_round_trip_is_exact(a in jet(3)) {
        let back: Jet<BigRational> = jet_from_json(&jet_to_json(&a)).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn float_json_round_trip_is_bit_exact(coeffs in prop::collection::vec(-1e3f64..1e3, 1..6)) {
        let mut j = Jet::<f64>::zero(N, ORDER);
        for (k, c) in coeffs.iter().enumerate() {
            let e = [k as u16 % 3, 1, 0, (k as u16 + 1) % 2];
            j.add_term(Monomial::new(e.to_vec()), *c);
        }
        let back: Jet<f64> = jet_from_json(&jet_to_json(&j)).unwrap();
        prop_assert_eq!(back, j);
    }
}
