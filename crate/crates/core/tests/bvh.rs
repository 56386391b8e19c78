use keyloom_core::mocap::{parse_bvh, write_bvh};
use keyloom_core::verify::{bvh_round_trip, BVH_CORPUS, MALFORMED_BVH};
use keyloom_core::Error;
use proptest::prelude::*;

#[test]
fn corpus_round_trips() {
    assert!(BVH_CORPUS.len() >= 10);
    for (name, text) in BVH_CORPUS {
        let (rot, pos) = bvh_round_trip(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(rot < 1e-6 && pos < 1e-6, "{name}: rotation {rot:e}, root {pos:e}");
    }
}

#[test]
fn corpus_emission_is_stable() {
    for (name, text) in BVH_CORPUS {
        let (_, a) = parse_bvh(text).unwrap();
        let once = write_bvh(&a);
        let (_, b) = parse_bvh(&once).unwrap();
        assert_eq!(b.skeleton.parents, a.skeleton.parents, "{name}");
        assert_eq!(b.len(), a.len(), "{name}");
        assert_eq!(b.fps, a.fps, "{name}");
    }
}

#[test]
fn malformed_inputs_are_structured_errors() {
    for (label, text) in MALFORMED_BVH {
        match parse_bvh(text) {
            Err(Error::Parse { .. } | Error::Structural(_)) => {}
            other => panic!("{label}: {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn truncated_files_never_panic(file in 0..BVH_CORPUS.len(), cut in 0.0f64..1.0) {
        let text = BVH_CORPUS[file].1;
        let mut at = (text.len() as f64 * cut) as usize;
        while !text.is_char_boundary(at) {
            at -= 1;
        }
        let _ = parse_bvh(&text[..at]);
    }

    #[test]
    fn mutated_files_never_panic(file in 0..BVH_CORPUS.len(), at in any::<prop::sample::Index>(), byte in 0u8..128) {
        let mut bytes = BVH_CORPUS[file].1.as_bytes().to_vec();
        let i = at.index(bytes.len());
        bytes[i] = byte;
        if let Ok(text) = String::from_utf8(bytes) {
            let _ = parse_bvh(&text);
        }
    }
}
