//! Frame I/O, the netpbm codec and the corruption protocol.

use dstt::data::netpbm::{self, PnmImage};
use dstt::data::{
    byte_to_unit, corrupt, load_clip, load_masks, save_clip, save_masks, synth_dataset, unit_to_byte, DatasetSpec,
    MaskConfig,
};
use dstt::{MaskSequence, SeededRng, Tensor, VideoClip};
use proptest::prelude::*;

#[test]
fn every_byte_survives_the_unit_range() {
    for p in 0..=255u8 {
        let v = byte_to_unit(p);
        assert!((-1.0..=1.0).contains(&v));
        assert_eq!(unit_to_byte(v), p);
    }
    assert_eq!(byte_to_unit(255), 1.0);
    assert_eq!(byte_to_unit(0), -1.0);
}

#[test]
fn clip_and_masks_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    // every byte value appears in every channel
    let (t, h, w) = (2, 16, 16);
    let data: Vec<f32> = (0..t * 3 * h * w).map(|i| byte_to_unit(((i * 7) % 256) as u8)).collect();
    let clip = VideoClip::new(Tensor::from_vec(&[t, 3, h, w], data).unwrap()).unwrap();
    save_clip(&clip, dir.path()).unwrap();
    let back = load_clip(dir.path()).unwrap();
    assert_eq!(back.frames().data(), clip.frames().data());

    let mut rng = SeededRng::new(1);
    let noisy: Vec<f32> = (0..t * 3 * h * w).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
    let noisy = VideoClip::new(Tensor::from_vec(&[t, 3, h, w], noisy).unwrap()).unwrap();
    save_clip(&noisy, dir.path()).unwrap();
    let back = load_clip(dir.path()).unwrap();
    for (a, b) in noisy.frames().data().iter().zip(back.frames().data()) {
        assert!((a - b).abs() < 1.0 / 255.0, "{a} vs {b}");
    }

    let masks = MaskConfig::default().sample(&mut rng, t, h, w).unwrap();
    save_masks(&masks, dir.path()).unwrap();
    assert_eq!(load_masks(dir.path(), t, (h, w)).unwrap(), masks);
}

#[test]
fn missing_mask_is_named() {
    let dir = tempfile::tempdir().unwrap();
    save_masks(&MaskSequence::zeros(2, 8, 8), dir.path()).unwrap();
    let err = load_masks(dir.path(), 4, (8, 8)).unwrap_err();
    assert!(err.to_string().contains("mask frame 00002 not found"), "{err}");
}

#[test]
fn corruption_keeps_valid_pixels_and_zeroes_holes() {
    let mut rng = SeededRng::new(2);
    let spec = DatasetSpec { clips: 2, ..DatasetSpec::default() };
    let videos = synth_dataset(&mut rng, &spec).unwrap();
    let clip = videos[0].window(0, 5).unwrap();
    let masks = MaskConfig::default().sample(&mut rng, 5, 48, 48).unwrap();
    let x = corrupt(&clip, &masks).unwrap();
    let plane = 48 * 48;
    for (i, (&xv, &yv)) in x.frames().data().iter().zip(clip.frames().data()).enumerate() {
        let m = masks.masks().data()[(i / (3 * plane)) * plane + i % plane];
        if m == 1.0 {
            assert_eq!(xv, 0.0);
        } else {
            assert_eq!(xv.to_bits(), yv.to_bits());
        }
    }
    assert_eq!(corrupt(&x, &masks).unwrap(), x);
}

#[test]
fn synthesis_is_a_pure_function_of_seed_and_spec() {
    let spec = DatasetSpec { clips: 3, ..DatasetSpec::default() };
    let a = synth_dataset(&mut SeededRng::new(5), &spec).unwrap();
    let b = synth_dataset(&mut SeededRng::new(5), &spec).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|c| c.frames().data().iter().all(|v| (-1.0..=1.0).contains(v))));
}

fn image() -> impl Strategy<Value = PnmImage> {
    (1usize..6, 1usize..6, prop::sample::select(vec![1usize, 3])).prop_flat_map(|(w, h, c)| {
        prop::collection::vec(any::<u8>(), w * h * c).prop_map(move |data| PnmImage {
            width: w,
            height: h,
            channels: c,
            data,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn encode_then_parse_is_identity(img in image()) {
        prop_assert_eq!(netpbm::parse(&netpbm::encode(&img)).unwrap(), img);
    }

    #[test]
    fn every_truncation_is_an_error(img in image(), cut in any::<prop::sample::Index>()) {
        let bytes = netpbm::encode(&img);
        let keep = cut.index(bytes.len());
        prop_assert!(netpbm::parse(&bytes[..keep]).is_err());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = netpbm::parse(&bytes);
    }

    #[test]
    fn mutated_headers_never_panic(img in image(), edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..4)) {
        let mut bytes = netpbm::encode(&img);
        let header = bytes.len() - img.data.len();
        for (at, value) in edits {
            bytes[at.index(header)] = value;
        }
        if let Err(e) = netpbm::parse(&bytes) {
            prop_assert!(e.offset <= bytes.len());
        }
    }

    #[test]
    fn prefixed_digits_in_header_fields_never_panic(digits in "[0-9]{1,30}") {
        let bytes = format!("P6\n{digits} {digits}\n255\n").into_bytes();
        let _ = netpbm::parse(&bytes);
    }
}
