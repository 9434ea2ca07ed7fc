use proptest::prelude::*;

use scgt::bytecode::{extract_runtime, fingerprint_bytecode, locate_metadata, zero_metadata};
use scgt::consolidate::consolidate;
use scgt::model::make_occurrence_id;
use scgt::resolve::{ChainCache, ChainRecord};
use scgt::source::{fingerprint_source, normalize_source, strip_pragmas};
use scgt::{normalize_address, Assessment, ChainId, ContractIdentity, Digest, Judgment};

fn solidityish() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            "[a-z_][a-z0-9_]{0,6}",
            Just(" ".to_string()),
            Just("\n\t ".to_string()),
            Just("// c\n".to_string()),
            Just("/* x */".to_string()),
            Just("\"s  t\"".to_string()),
            Just("pragma solidity ^0.4.24;".to_string()),
            "[{}();=+*/]",
        ],
        0..30,
    )
    .prop_map(|v| v.concat())
}

proptest! {
    #[test]
    fn normalization_is_idempotent(text in solidityish()) {
        let once = normalize_source(&text);
        let twice = normalize_source(&once.text);
        prop_assert_eq!(&once.text, &twice.text);
        prop_assert_eq!(fingerprint_source(&once), fingerprint_source(&twice));
    }

    #[test]
    fn stripping_pragmas_is_idempotent(text in solidityish()) {
        let stripped = strip_pragmas(&normalize_source(&text));
        prop_assert_eq!(strip_pragmas(&normalize_source(&stripped)), stripped);
    }

    #[test]
    fn zeroing_keeps_length_and_is_idempotent(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
        let z = zero_metadata(&bytes);
        prop_assert_eq!(z.len(), bytes.len());
        prop_assert_eq!(zero_metadata(&z), z.clone());
        prop_assert_eq!(fingerprint_bytecode(&z), fingerprint_bytecode(&bytes));
        for s in locate_metadata(&bytes) {
            prop_assert!(s.end() <= bytes.len());
        }
    }

    #[test]
    fn extracted_runtime_lies_inside_deployment(bytes in proptest::collection::vec(any::<u8>(), 0..120)) {
        if let Some(rt) = extract_runtime(&bytes) {
            prop_assert!(rt.len() <= bytes.len());
            prop_assert!(bytes.windows(rt.len().max(1)).any(|w| w == &rt[..]) || rt.is_empty());
        }
    }
}

/// dataset, entry, class, judgment, address, source, runtime code
type Spec = (u8, u8, u16, u8, Option<u8>, Option<u8>, Option<u8>);

fn assessment() -> impl Strategy<Value = Spec> {
    (0..3u8, 0..5u8, prop_oneof![Just(101u16), Just(107), Just(109)], 0..3u8, proptest::option::of(0..3u8),
        proptest::option::of(0..2u8), proptest::option::of(0..2u8))
}

fn build(specs: &[Spec]) -> Vec<Assessment> {
    let mut occ = std::collections::HashMap::new();
    specs
        .iter()
        .map(|&(d, e, swc, j, addr, src, code)| {
            let (dataset, entry, label) = (format!("D{d}"), format!("e{e}"), format!("L{swc}"));
            let n = occ.entry((dataset.clone(), entry.clone(), label.clone())).or_insert(0);
            *n += 1;
            let mut c = ContractIdentity::default();
            if let Some(a) = addr {
                c.address = normalize_address(&format!("{a:040x}"));
                c.chain = Some(ChainId::Mainnet);
            }
            if let Some(s) = src {
                c.source_fp = Some(Digest::of(&[s]));
                c.source_fp_nopragma = Some(Digest::of(&[s]));
            }
            c.runtime_fp = code.map(|k| Digest::of(&[9, k]));
            Assessment {
                id: make_occurrence_id(&dataset, &entry, &label, *n).unwrap(),
                dataset,
                entry_id: entry,
                contract: c,
                property_label: label,
                judgment: [Judgment::Positive, Judgment::Negative, Judgment::Na][j as usize],
                swc_id: Some(swc),
                dasp_id: Some(1),
                ignored: false,
                ignore_reason: None,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn consolidation_ignores_input_order(specs in proptest::collection::vec(assessment(), 0..40), seed in any::<u64>()) {
        let input = build(&specs);
        let mut shuffled = input.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed as usize).wrapping_mul(i + 7) % (i + 1));
        }
        prop_assert_eq!(consolidate(input).unwrap(), consolidate(shuffled).unwrap());
    }

    #[test]
    fn consolidation_is_idempotent_and_lossless(specs in proptest::collection::vec(assessment(), 0..40)) {
        let input = build(&specs);
        let once = consolidate(input.clone()).unwrap();
        prop_assert_eq!(once.assessments.len(), input.len());
        let twice = consolidate(once.assessments.clone()).unwrap();
        prop_assert_eq!(&once, &twice);
        for g in &once.groups {
            prop_assert!(!g.members.is_empty());
        }
        // reasons are set exactly on ignored assessments
        prop_assert!(once.ignored().all(|a| a.ignore_reason.is_some()));
        prop_assert!(once.retained().all(|a| a.ignore_reason.is_none()));
    }

    #[test]
    fn retained_assessments_never_collide(specs in proptest::collection::vec(assessment(), 0..40)) {
        let store = consolidate(build(&specs)).unwrap();
        let kept: Vec<_> = store.retained().collect();
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                if a.dataset == b.dataset && a.swc_id == b.swc_id {
                    prop_assert!(a.entry_id != b.entry_id);
                    let shared = scgt::consolidate::match_keys(a).into_iter().any(|k| scgt::consolidate::match_keys(b).contains(&k));
                    prop_assert!(!shared, "{} and {} share a key", a.id, b.id);
                }
            }
        }
    }

    #[test]
    fn cache_round_trips(ns in proptest::collection::btree_set(1u8..200, 0..20)) {
        let mut cache = ChainCache::new();
        for n in &ns {
            cache.insert(ChainRecord {
                address: normalize_address(&format!("{n:040x}")).unwrap(),
                chain: [ChainId::Mainnet, ChainId::Ropsten][*n as usize % 2],
                deployment_block: Some(*n as u64 * 1000),
                runtime_hex: format!("60{n:02x}"),
                deploy_hex: None,
                source_text: None,
                contract_name: None,
            }).unwrap();
        }
        let mut buf = Vec::new();
        cache.write(&mut buf).unwrap();
        let back = ChainCache::from_reader(std::io::Cursor::new(buf.clone()), std::path::Path::new("c")).unwrap();
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        prop_assert_eq!(buf, again);
        prop_assert_eq!(back.len(), ns.len());
    }
}
