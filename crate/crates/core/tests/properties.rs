use proptest::prelude::*;

use currdyn_core::currents::freq_vector;
use currdyn_core::dynamics::{goodness_at_depth, random_circuit, Dynamics, DynamicsOptions};
use currdyn_core::free_group::{
    compose, conjugacy_equal, cyclic_reduce, is_cyclically_reduced, reduce_letters, Automorphism, CyclicWord, Letter,
    Word,
};
use currdyn_core::marked_graph::{bcc_constant, GraphMap};
use currdyn_core::text::{format_automorphism, parse_map};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RANK: usize = 3;

fn letters(max: usize) -> impl Strategy<Value = Vec<Letter>> {
    prop::collection::vec((0..2 * RANK).prop_map(Letter::from_code), 0..max)
}

fn reduced_word(max: usize) -> impl Strategy<Value = Word> {
    letters(max).prop_map(|l| Word::reduced(&l))
}

fn circuit(max: usize) -> impl Strategy<Value = CyclicWord> {
    letters(max).prop_filter_map("trivial class", |l| {
        let w = Word::reduced(&l);
        cyclic_reduce(&w).ok().map(|r| r.cyclic)
    })
}

/// Right transvection `a_i -> a_i a_j^±1`, with its inverse.
fn transvection(i: usize, j: usize, inverse: bool) -> Automorphism {
    let mut fwd: Vec<Word> = (0..RANK)
        .map(|k| Word::from_letters(vec![Letter::positive(k)]))
        .collect();
    let mut bwd = fwd.clone();
    fwd[i] = Word::from_letters(vec![Letter::positive(i), Letter::new(j, inverse)]);
    bwd[i] = Word::from_letters(vec![Letter::positive(i), Letter::new(j, !inverse)]);
    Automorphism::new(fwd).unwrap().with_inverse(bwd).unwrap()
}

fn automorphism() -> impl Strategy<Value = Automorphism> {
    prop::collection::vec((0..RANK, 1..RANK, any::<bool>()), 1..6).prop_map(|moves| {
        moves
            .into_iter()
            .fold(Automorphism::identity(RANK), |acc, (i, d, inv)| {
                let t = transvection(i, (i + d) % RANK, inv);
                compose(&t, &acc).unwrap()
            })
    })
}

fn candidate() -> (GraphMap, GraphMap) {
    let w = |s: &str| Word::parse_compact(s).unwrap();
    let phi = Automorphism::new(vec![w("ab"), w("bc"), w("cab")])
        .unwrap()
        .with_inverse(vec![w("acAB"), w("baC"), w("cA")])
        .unwrap();
    (
        GraphMap::from_automorphism(&phi),
        GraphMap::from_automorphism(&phi.inverse().unwrap()),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reduction_is_idempotent(l in letters(40)) {
        let once = reduce_letters(&l);
        prop_assert_eq!(reduce_letters(&once), once.clone());
        prop_assert!(once.len() <= l.len());
        prop_assert_eq!(once.len() % 2, l.len() % 2);
    }

    #[test]
    fn word_times_inverse_is_trivial(w in reduced_word(40)) {
        prop_assert!(w.mul(&w.inverse()).is_empty());
        prop_assert_eq!(w.inverse().inverse(), w);
    }

    #[test]
    fn cyclic_reduction_conjugates_back(w in reduced_word(40)) {
        prop_assume!(!w.is_empty());
        let r = cyclic_reduce(&w).unwrap();
        prop_assert!(is_cyclically_reduced(r.cyclic.letters()));
        let back = r.conjugator.mul(&r.core).mul(&r.conjugator.inverse());
        prop_assert_eq!(back, w);
        prop_assert_eq!(CyclicWord::new(r.core.letters()).unwrap(), r.cyclic);
    }

    #[test]
    fn rotations_give_the_same_class(c in circuit(30)) {
        for r in c.rotations() {
            prop_assert_eq!(CyclicWord::new(&r).unwrap(), c.clone());
        }
        prop_assert!(conjugacy_equal(&c, &c.inverse(), false));
    }

    #[test]
    fn automorphism_inverse_undoes_it(phi in automorphism(), w in reduced_word(20)) {
        let inv = phi.inverse().unwrap();
        prop_assert_eq!(inv.apply(&phi.apply(&w)), w.clone());
        prop_assert_eq!(phi.apply(&inv.apply(&w)), w);
    }

    #[test]
    fn automorphism_text_round_trip(phi in automorphism()) {
        let parsed = parse_map(&format_automorphism(&phi)).unwrap();
        let back = parsed.automorphism.unwrap();
        prop_assert_eq!(back.images(), phi.images());
        let (bi, pi) = (back.inverse().unwrap(), phi.inverse().unwrap());
        prop_assert_eq!(bi.images(), pi.images());
    }

    #[test]
    fn counting_currents_are_exact(c in circuit(30), order in 1usize..5) {
        let g = GraphMap::from_automorphism(&Automorphism::identity(RANK));
        let v = freq_vector(g.graph(), &c, order);
        prop_assert_eq!(v.flip_defect(), 0.0);
        prop_assert_eq!(v.kirchhoff_defect(), 0.0);
        let n = v.normalized();
        prop_assert!(n.flip_defect() < 1e-12 && n.kirchhoff_defect() < 1e-12);
    }

    #[test]
    fn counting_currents_are_conjugacy_invariant(c in circuit(30), k in 0usize..30) {
        let g = GraphMap::from_automorphism(&Automorphism::identity(RANK));
        let l = c.letters();
        let k = k % l.len();
        let rotated = CyclicWord::new(&[&l[k..], &l[..k]].concat()).unwrap();
        prop_assert_eq!(freq_vector(g.graph(), &c, 3), freq_vector(g.graph(), &rotated, 3));
        prop_assert_eq!(freq_vector(g.graph(), &c, 3), freq_vector(g.graph(), &c.inverse(), 3));
    }

    #[test]
    fn bounded_cancellation_holds(phi in automorphism(), a in reduced_word(12), b in reduced_word(12)) {
        let f = GraphMap::from_automorphism(&phi);
        let c = bcc_constant(&f, 16).unwrap();
        let whole = phi.apply(&a.mul(&b)).len();
        let parts = phi.apply(&a).len() + phi.apply(&b).len();
        // the product a·b may cancel before f is applied
        let pre = (a.len() + b.len() - a.mul(&b).len()) / 2;
        prop_assume!(pre == 0);
        prop_assert!((parts - whole) / 2 <= c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn goodness_is_a_fraction_of_length(seed in any::<u64>(), len in 1usize..40) {
        let (f, fi) = candidate();
        let ctx = Dynamics::new(&f, &fi, DynamicsOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(ctx.graph(), len, &mut rng);
        let side = &ctx.forward;
        let r = goodness_at_depth(&side.map, &side.legal, &side.units, &c, 3);
        prop_assert!((0.0..=1.0).contains(&r.goodness));
        prop_assert_eq!(r.good_length + r.bad_length, c.len());
        prop_assert_eq!(r.pieces.iter().map(|p| p.len).sum::<usize>(), c.len());
        prop_assert!((r.goodness - r.good_length as f64 / c.len() as f64).abs() < 1e-12);
        // pieces read off a rotation of the circuit
        let joined: Vec<Letter> = r.subpaths().into_iter().flat_map(|(p, _)| p).collect();
        prop_assert_eq!(CyclicWord::new(&joined).unwrap(), c);
    }

    #[test]
    fn goodness_bad_length_is_bounded_under_iteration(seed in any::<u64>()) {
        let (f, fi) = candidate();
        let ctx = Dynamics::new(&f, &fi, DynamicsOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(ctx.graph(), 16, &mut rng);
        let once = ctx.forward.map.map_circuit(&c).unwrap();
        let r = ctx.forward.goodness(&once, 3);
        prop_assert!(r.bad_length <= 2 * ctx.forward.c_constant() * c.len());
    }
}
