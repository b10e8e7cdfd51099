mod oracle;

use crop_core::grid::{region_to_tokens, Region, TokenGrid};
use crop_core::harness::dataset::{generate, GenSpec, SynthSpec};
use crop_core::ilp::{ModelConfig, ToyTransformer};
use crop_core::plc::{compress, compress_ablated};
use oracle::*;

#[test]
fn region_mapping_matches_cell_centers_everywhere() {
    for side in [1, 3, 7, 8, 14, 16, 24, 32] {
        for views in [1, 3] {
            let grid = TokenGrid::new(side, views).unwrap();
            for r in Region::all() {
                assert_eq!(region_to_tokens(&r, &grid).indices(), brute_tokens(&r, side, views).as_slice(), "{r} side {side} views {views}");
            }
        }
    }
}

#[test]
fn compress_matches_scalar_loops_on_a_hand_sized_case() {
    // d 8, side 8, region covering 2×2 blocks: 4 contextual tokens, 2 and 4 queries
    let mut case = plc_case(11, 8, 2, 4, 4);
    case.side = 8;
    case.views = 1;
    case.region = Region::new(1, 1, 2, 2).unwrap();
    case.tokens.truncate(64);
    assert_eq!(brute_tokens(&case.region, 8, 1).len(), 4);
    let (tokens, params) = case.library_inputs();
    let out = compress(&tokens, &case.region, &params).unwrap();
    assert_eq!(out.tokens.rows(), 8);
    assert!(max_abs(&case.compress(), &out.tokens) < 1e-12);
    assert!(max_abs(&case.compress_ablated(), &compress_ablated(&tokens, &case.region, &params).unwrap()) < 1e-12);
}

#[test]
fn compress_matches_scalar_loops_on_seeded_cases() {
    for seed in 0..24 {
        let case = plc_case(seed, 12, 16, 4, 16);
        let (tokens, params) = case.library_inputs();
        let out = compress(&tokens, &case.region, &params).unwrap();
        let err = max_abs(&case.compress(), &out.tokens);
        assert!(err < 1e-12, "seed {seed}: {err:e}");
    }
}

#[test]
fn decoder_forward_matches_scalar_loops() {
    for seed in 0..20u64 {
        let tie_qk = seed % 2 == 0;
        let cfg = ModelConfig { layers: 3, heads: 2, dim: 8, mlp: 12, seed, tie_qk };
        let model = ToyTransformer::new(cfg).unwrap();
        let s = &generate(&GenSpec { count: 1, side: 4, m: 3, query_len: 2, ..GenSpec::default() }, seed)[0];
        let seq = s.sequence(8, &SynthSpec::default(), seed).unwrap();
        let got = model.forward_baseline(&seq).unwrap();
        let want = decoder_forward(&model, &to_rows(&seq.embeddings()));
        let err = max_abs(&want, got.final_hidden());
        assert!(err < 1e-12, "seed {seed}: {err:e}");
    }
}

#[test]
fn plc_gradients_match_central_differences() {
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let case = plc_case(1000 + seed, 8, 16, 4, 16);
        worst = worst.max(plc_gradient_error(&case, seed, 6));
    }
    assert!(worst <= 1e-4, "max relative error {worst:e}");
}
