use hsf_core::basis::{charges, sector_dimensions, symmetrize_inversion};
use hsf_core::constraints::{allowed_moves, build_fragment};
use hsf_core::disorder::{cell_seed, sample_realization};
use hsf_core::dynamics::{evolve, imbalance_diagonal, linear_time_grid, EvolveOptions, Propagator};
use hsf_core::model::{
    build_effective_hamiltonian, hopping_amplitudes, numeric_sw_amplitude, EffectiveMode, ModelParams,
};
use hsf_core::spectral::{eigenstate_entropy, r_statistics};
use hsf_core::{RegimeTag, SpinConfig};
use proptest::prelude::*;

fn config(max_len: usize) -> impl Strategy<Value = SpinConfig> {
    (2..=max_len).prop_flat_map(|len| (0..(1u64 << len)).prop_map(move |b| SpinConfig::new(b, len).unwrap()))
}

fn regime() -> impl Strategy<Value = RegimeTag> {
    prop::sample::select(RegimeTag::ALL.to_vec())
}

proptest! {
    #[test]
    fn bitstring_round_trips(c in config(40)) {
        prop_assert_eq!(c.to_string().parse::<SpinConfig>().unwrap(), c);
        prop_assert_eq!(SpinConfig::from_hex(&c.to_hex(), c.len()).unwrap(), c);
        prop_assert_eq!(c.reversed().reversed(), c);
        prop_assert_eq!(c.reversed().n_nn(), c.n_nn());
    }

    #[test]
    fn moves_conserve_charges_and_are_symmetric(c in config(24), r in regime()) {
        let key = charges(c, r);
        for (d, _) in allowed_moves(c, r) {
            prop_assert_eq!(charges(d, r), key);
            prop_assert!(allowed_moves(d, r).iter().any(|(e, _)| *e == c));
        }
    }

    #[test]
    fn fragment_is_independent_of_the_seed_member(c in config(14), r in regime(), pick in any::<prop::sample::Index>()) {
        let frag = build_fragment(c, r, None).unwrap();
        let other = frag.basis()[pick.index(frag.dim())];
        let again = build_fragment(other, r, None).unwrap();
        prop_assert_eq!(again.dim(), frag.dim());
        prop_assert_eq!(again.canonical_id(), frag.canonical_id());
        let key = charges(c, r);
        prop_assert!(frag.basis().iter().all(|&m| charges(m, r) == key));
    }

    #[test]
    fn sectors_partition_the_full_space(len in 1usize..=14, r in regime()) {
        let total: usize = sector_dimensions(len, r).unwrap().values().sum();
        prop_assert_eq!(total, 1usize << len);
    }

    #[test]
    fn effective_hamiltonian_is_symmetric(
        c in config(12),
        dov in 4.0f64..20.0,
        vod in 0.05f64..3.0,
    ) {
        let p = ModelParams::from_ratios(dov, vod).unwrap();
        let frag = build_fragment(c, RegimeTag::NnOnly, None).unwrap();
        for mode in [EffectiveMode::Analytic, EffectiveMode::NumericSw] {
            let h = build_effective_hamiltonian(&frag, &p, mode).unwrap();
            prop_assert_eq!(h.dim(), frag.dim());
            prop_assert_eq!(h.asymmetry(), 0.0);
        }
    }

    #[test]
    fn numeric_hops_match_closed_form(dov in 4.0f64..20.0, vod in 0.05f64..3.0) {
        let p = ModelParams::from_ratios(dov, vod).unwrap();
        let (jp, jq) = hopping_amplitudes(p.omega, p.delta, p.v());
        let magnon = numeric_sw_amplitude("0100000".parse().unwrap(), "0010000".parse().unwrap(), &p).unwrap();
        let hole = numeric_sw_amplitude("1011111".parse().unwrap(), "1101111".parse().unwrap(), &p).unwrap();
        prop_assert!((magnon - jp).abs() <= 1e-10 * jp);
        prop_assert!((hole - jq).abs() <= 1e-10 * jq);
        prop_assert!((jp / jq - (1.0 + 2.0 * vod)).abs() < 1e-10);
    }

    #[test]
    fn evolution_is_unitary_and_conserves_n_r(c in config(12), t_max in 1.0f64..50.0, krylov in any::<bool>()) {
        prop_assume!(c.n_r() > 0 && (c.n_r() as usize) < c.len());
        let p = ModelParams::from_ratios(5.0, 0.5).unwrap();
        let frag = build_fragment(c, RegimeTag::NnOnly, None).unwrap();
        let h = build_effective_hamiltonian(&frag, &p, EffectiveMode::Analytic).unwrap();
        let propagator = if krylov { Propagator::Krylov } else { Propagator::Eigen };
        let opts = EvolveOptions { time_unit: 1.0 / p.j_p(), propagator, ..Default::default() };
        let q = evolve(c, &h, &linear_time_grid(0.0, t_max, 8), &opts).unwrap();
        prop_assert!(q.max_norm_drift < 1e-8 && q.max_energy_drift < 1e-8);
        for n in &q.densities {
            prop_assert!((n.iter().sum::<f64>() - c.n_r() as f64).abs() < 1e-8);
        }
        prop_assert!((q.imbalance.as_ref().unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_bounded_and_cut_symmetric(
        len in 2usize..=8,
        raw in prop::collection::vec(-1.0f64..1.0, 256),
        cut_frac in 0.0f64..1.0,
    ) {
        let dim = 1usize << len;
        let norm = raw[..dim].iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let amps: Vec<f64> = raw[..dim].iter().map(|x| x / norm).collect();
        let basis: Vec<SpinConfig> = (0..dim as u64).map(|b| SpinConfig::new(b, len).unwrap()).collect();
        let reversed: Vec<SpinConfig> = basis.iter().map(|c| c.reversed()).collect();
        let cut = 1 + ((len - 1) as f64 * cut_frac) as usize % (len - 1);
        let s = eigenstate_entropy(&amps, &basis, cut).unwrap();
        let s_rev = eigenstate_entropy(&amps, &reversed, len - cut).unwrap();
        prop_assert!((s - s_rev).abs() < 1e-9);
        prop_assert!(s >= -1e-12 && s <= cut.min(len - cut) as f64 * std::f64::consts::LN_2 + 1e-9);
    }

    #[test]
    fn gap_ratio_is_affine_invariant(
        gaps in prop::collection::vec(0.01f64..1.0, 5..60),
        scale in 0.1f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let levels: Vec<f64> = gaps.iter().scan(0.0, |acc, g| { *acc += g; Some(*acc) }).collect();
        let moved: Vec<f64> = levels.iter().map(|e| scale * e + shift).collect();
        let a = r_statistics(&levels).unwrap();
        let b = r_statistics(&moved).unwrap();
        prop_assert!((a.mean_r - b.mean_r).abs() < 1e-9);
        prop_assert!(a.r_values.iter().all(|r| (0.0..=1.0).contains(r)));
    }

    #[test]
    fn inversion_basis_preserves_norm(k in 2usize..=6) {
        let root: SpinConfig = "100".repeat(k).parse().unwrap();
        let frag = build_fragment(root, RegimeTag::NnOnly, None).unwrap();
        let inv = symmetrize_inversion(frag.basis()).unwrap();
        prop_assert_eq!(2 * inv.pair_count() + inv.palindrome_count(), frag.dim());
        let coeffs = vec![1.0 / (inv.dim() as f64).sqrt(); inv.dim()];
        let (configs, amps) = inv.expand(&coeffs);
        prop_assert!((amps.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(configs.iter().all(|c| frag.position(*c).is_some()));
    }

    #[test]
    fn imbalance_is_one_on_the_initial_state(c in config(16)) {
        prop_assume!(c.n_r() > 0 && (c.n_r() as usize) < c.len());
        let d = imbalance_diagonal(&[c, c.flipped()], c).unwrap();
        prop_assert!((d[0] - 1.0).abs() < 1e-12);
        prop_assert!((d[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn disorder_is_reproducible(len in 2usize..30, width in 0.0f64..0.5, seed in any::<u64>()) {
        let a = sample_realization(len, width, seed).unwrap();
        let b = sample_realization(len, width, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.offsets.iter().all(|d| d.abs() <= width / 2.0));
        prop_assert!(a.positions.windows(2).all(|w| w[1] > w[0]));
        prop_assert_ne!(cell_seed(seed, len, width, 0), cell_seed(seed, len, width, 1));
    }
}
