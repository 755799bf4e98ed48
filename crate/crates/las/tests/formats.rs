mod common;

use std::path::PathBuf;

use las::formats::{
    decode_features, decode_params, encode_features, encode_params, format_arpa, format_vocab, infer_las_config,
    load_manifest, parse_arpa, parse_jsonl, parse_vocab, to_jsonl, validate_manifest, Dtype, ManifestRecord,
    NbestRecord,
};
use las::frontend::FeatureSequence;
use las::Error;
use las_core::model::AlignmentHistory;
use las_core::numerics::{ParamStore, Tensor};
use proptest::prelude::*;

#[test]
fn checkpoint_round_trip_is_byte_exact() {
    let vocab = common::toy_vocab();
    let model = common::toy_model(&vocab);
    for dtype in [Dtype::F32, Dtype::F64] {
        let bytes = encode_params(&model.params, dtype);
        let (back, d) = decode_params(&bytes, "mem").unwrap();
        assert_eq!(d, dtype);
        assert_eq!(encode_params(&back, dtype), bytes);
    }
    let (back, _) = decode_params(&encode_params(&model.params, Dtype::F64), "mem").unwrap();
    assert_eq!(back, model.params);
    let cfg = infer_las_config(&back, true, AlignmentHistory::Accumulated).unwrap();
    assert_eq!(cfg, model.config);
}

#[test]
fn checkpoint_errors_carry_offsets() {
    let mut store = ParamStore::new();
    store.insert("w", Tensor::vector(&[1.0, 2.0])).unwrap();
    let bytes = encode_params(&store, Dtype::F32);
    let err = decode_params(&bytes[..bytes.len() - 2], "ckpt").unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err}");
    assert!(err.to_string().contains("ckpt at byte"), "{err}");
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_params(&bad, "ckpt").is_err());
    let mut long = bytes;
    long.push(0);
    assert!(decode_params(&long, "ckpt").is_err());
}

#[test]
fn features_round_trip() {
    let f = FeatureSequence {
        id: "u".into(),
        frames: Tensor::matrix(3, 2, vec![0.5, -1.25, 2.0, 0.0, 3.5, -0.125]).unwrap(),
        frame_shift: 0.01,
    };
    let bytes = encode_features(&f);
    let back = decode_features(&bytes, "f").unwrap();
    assert_eq!(back.frames, f.frames);
    assert_eq!(encode_features(&back), bytes);
    assert!(decode_features(&bytes[..10], "f").is_err());
}

#[test]
fn vocab_round_trip() {
    let vocab = common::toy_vocab();
    let text = format_vocab(&vocab);
    let back = parse_vocab(&text, "v").unwrap();
    assert_eq!(back, vocab);
    assert_eq!(format_vocab(&back), text);
    assert!(parse_vocab("nonsense\n", "v").is_err());
}

#[test]
fn arpa_errors_name_the_line() {
    let bad = "\\data\\\nngram 1=2\n\n\\1-grams:\n-0.5\ta\nzzz\tb\n\\end\\\n";
    let err = parse_arpa(bad, -10.0, "lm.arpa").unwrap_err().to_string();
    assert!(err.contains("lm.arpa:6"), "{err}");

    let short = "\\data\\\nngram 1=3\n\n\\1-grams:\n-0.5\ta\n-0.5\tb\n\\end\\\n";
    let err = parse_arpa(short, -10.0, "lm.arpa").unwrap_err().to_string();
    assert!(err.contains("declares 3"), "{err}");

    let open = "\\data\\\nngram 1=1\n\n\\1-grams:\n-0.5\ta\n";
    assert!(parse_arpa(open, -10.0, "x").unwrap_err().to_string().contains("end"));
    assert!(parse_arpa("\\data\\\n\\end\\\n", 0.5, "x").is_err());
}

#[test]
fn arpa_log_zero_maps_to_negative_infinity() {
    let text = "\\data\\\nngram 1=2\n\n\\1-grams:\n-99\t<s>\t-0.2\n-0.3\t</s>\n\n\\end\\\n";
    let lm = parse_arpa(text, 0.0, "x").unwrap();
    let bos = lm.word_id("<s>");
    assert_eq!(lm.entry(&[bos]).unwrap().log10_prob, f64::NEG_INFINITY);
    assert!(format_arpa(&lm).contains("-99\t<s>"));
}

#[test]
fn nbest_negative_infinity_is_null() {
    let r = NbestRecord {
        id: "u".into(),
        rank: 0,
        text: "ab".into(),
        tokens: vec![4, 2],
        las_logp: -1.5,
        lm_logp: f64::NEG_INFINITY,
        score: f64::NEG_INFINITY,
    };
    let text = to_jsonl(&[r.clone()]);
    assert!(text.contains("\"lm_logp\":null"), "{text}");
    let back: Vec<NbestRecord> = parse_jsonl(&text, "n").unwrap();
    assert_eq!(back, vec![r]);
}

fn record(id: &str, audio: Option<&str>, feats: Option<&str>) -> ManifestRecord {
    ManifestRecord { id: id.into(), audio: audio.map(PathBuf::from), feats: feats.map(PathBuf::from), text: "ab".into() }
}

#[test]
fn manifest_validation() {
    assert!(validate_manifest(&[record("a", Some("a.wav"), None), record("b", None, Some("b.fbk"))], "m").is_ok());
    assert!(validate_manifest(&[record("a", Some("a.wav"), Some("a.fbk"))], "m").is_err());
    assert!(validate_manifest(&[record("a", None, None)], "m").is_err());
    let err = validate_manifest(&[record("a", Some("x"), None), record("a", Some("y"), None)], "m").unwrap_err();
    assert!(err.to_string().contains("record 2"), "{err}");
    assert!(parse_jsonl::<ManifestRecord>("{\"id\":\"a\",\"text\":\"x\",\"extra\":1}\n", "m").is_err());
}

#[test]
fn manifest_paths_resolve_against_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    std::fs::write(&path, to_jsonl(&[record("a", None, Some("f/a.fbk")), record("b", Some("/abs.wav"), None)])).unwrap();
    let m = load_manifest(&path).unwrap();
    assert_eq!(m[0].feats.as_deref(), Some(dir.path().join("f/a.fbk").as_path()));
    assert_eq!(m[1].audio.as_deref(), Some(std::path::Path::new("/abs.wav")));
}

proptest! {
    #[test]
    fn any_store_round_trips(values in prop::collection::vec(-1e6f64..1e6, 1..40), cols in 1usize..5) {
        let rows = values.len() / cols;
        prop_assume!(rows > 0);
        let mut store = ParamStore::new();
        store.insert("m", Tensor::matrix(rows, cols, values[..rows * cols].to_vec()).unwrap()).unwrap();
        store.insert("v", Tensor::vector(&values)).unwrap();
        let bytes = encode_params(&store, Dtype::F64);
        let (back, _) = decode_params(&bytes, "p").unwrap();
        prop_assert_eq!(back, store);
    }
}
