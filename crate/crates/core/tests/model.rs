//! Structural properties of the token grid, the blocks and the encoder/decoder.

use dstt::model::encoder::stem;
use dstt::model::{
    decode, encoder_input, generator_forward, hierarchical_encode, init_generator, run_blocks, spatial_block,
    temporal_block, zero_block_outputs, BlockParams,
};
use dstt::{ModelConfig, ParamStore, SeededRng, Tensor, TokenGrid};
use proptest::prelude::*;

fn random(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap()
}

fn max_rel(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    let scale = b.data().iter().map(|v| v.abs() as f64).fold(0.0, f64::max);
    let diff = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).fold(0.0, f64::max);
    diff / scale
}

fn permute_frames(x: &Tensor<f32>, order: &[usize]) -> Tensor<f32> {
    let frame = x.numel() / x.shape()[0];
    let data = order.iter().flat_map(|&i| x.data()[i * frame..(i + 1) * frame].to_vec()).collect();
    Tensor::from_vec(x.shape(), data).unwrap()
}

struct Fixture {
    cfg: ModelConfig,
    params: ParamStore,
    tokens: Tensor<f32>,
}

fn fixture(seed: u64) -> Fixture {
    let cfg = ModelConfig::default();
    let mut rng = SeededRng::new(seed);
    let params = init_generator(&cfg, &mut rng).unwrap();
    let (h, w) = cfg.token_hw();
    let tokens = random(&mut rng, &[5, h, w, cfg.token_dim]);
    Fixture { cfg, params, tokens }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zone_split_then_merge_is_identity(
        t in 1usize..4,
        zh in 1usize..4,
        zw in 1usize..4,
        s in 1usize..4,
        d in 1usize..5,
        seed in any::<u64>(),
    ) {
        let grid = TokenGrid::new(random(&mut SeededRng::new(seed), &[t, s * zh, s * zw, d])).unwrap();
        let zones = grid.zone_split(s).unwrap();
        prop_assert_eq!(zones.shape(), &[t, s, s, zh * zw, d]);
        let back = TokenGrid::zone_merge(&zones, zh, zw).unwrap();
        prop_assert_eq!(back.tokens().data(), grid.tokens().data());
    }
}

#[test]
fn temporal_block_is_frame_permutation_equivariant() {
    let f = fixture(11);
    let p = BlockParams::from_store(&f.params, 0, &f.cfg).unwrap();
    let s = f.cfg.zone_split;
    for order in [[1, 0, 2, 3, 4], [4, 3, 2, 1, 0], [2, 4, 1, 0, 3]] {
        let out = temporal_block(&TokenGrid::new(f.tokens.clone()).unwrap(), s, &p).unwrap();
        let permuted = TokenGrid::new(permute_frames(&f.tokens, &order)).unwrap();
        let out_p = temporal_block(&permuted, s, &p).unwrap();
        let err = max_rel(out_p.tokens(), &permute_frames(out.tokens(), &order));
        assert!(err <= 1e-6, "{order:?}: {err}");
    }
}

#[test]
fn spatial_block_never_mixes_frames() {
    let f = fixture(12);
    let p = BlockParams::from_store(&f.params, 1, &f.cfg).unwrap();
    let s = f.cfg.zone_split;
    let frame = f.tokens.numel() / 5;
    let base = spatial_block(&TokenGrid::new(f.tokens.clone()).unwrap(), s, &p).unwrap();
    for target in 0..5 {
        let mut data = f.tokens.to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            if i / frame != target {
                *v = 0.9 - *v * 0.5;
            }
        }
        let other = TokenGrid::new(Tensor::from_vec(f.tokens.shape(), data).unwrap()).unwrap();
        let out = spatial_block(&other, s, &p).unwrap();
        let range = target * frame..(target + 1) * frame;
        assert_eq!(&out.tokens().data()[range.clone()], &base.tokens().data()[range]);
    }
}

#[test]
fn zeroed_output_projections_make_blocks_the_identity() {
    let mut f = fixture(13);
    zero_block_outputs(&mut f.params);
    let out = run_blocks(&TokenGrid::new(f.tokens.clone()).unwrap(), &f.cfg, &f.params).unwrap();
    assert!(max_rel(out.tokens(), &f.tokens) <= 1e-6);
}

#[test]
fn shape_traces() {
    let mut rng = SeededRng::new(14);
    for (h, w, s, l) in [(48, 48, 2, 4), (24, 48, 1, 1), (72, 48, 2, 0)] {
        let cfg = ModelConfig {
            frame_h: h,
            frame_w: w,
            zone_split: s,
            hierarchy_layers: l,
            ..ModelConfig::default()
        };
        let params: ParamStore = init_generator(&cfg, &mut rng).unwrap();
        let frames = random(&mut rng, &[3, 3, h, w]);
        let masks = Tensor::zeros(&[3, 1, h, w]);
        let input = encoder_input(&frames, &masks).unwrap();
        assert_eq!(input.shape(), &[3, 4, h, w]);
        let c = cfg.base_channels;
        assert_eq!(stem(&input, &params).unwrap().shape(), &[3, c, h / 4, w / 4]);
        let grid = hierarchical_encode(&input, &cfg, &params).unwrap();
        assert_eq!(grid.dims(), (3, h / 12, w / 12, 2 * c));
        assert_eq!(cfg.tokens_per_zone(), (h / 12 / s) * (w / 12 / s));
        let blocks = run_blocks(&grid, &cfg, &params).unwrap();
        assert_eq!(blocks.dims(), grid.dims());
        assert_eq!(decode(&blocks, &params).unwrap().shape(), &[3, 3, h, w]);
        assert_eq!(generator_forward(&frames, &masks, &cfg, &params).unwrap().shape(), &[3, 3, h, w]);
    }
}

#[test]
fn misaligned_frames_are_rejected() {
    let cfg = ModelConfig::default();
    let params: ParamStore = init_generator(&cfg, &mut SeededRng::new(1)).unwrap();
    let frames = Tensor::zeros(&[2, 3, 36, 48]);
    let masks = Tensor::zeros(&[2, 1, 36, 48]);
    assert!(generator_forward(&frames, &masks, &cfg, &params).is_err());
}
