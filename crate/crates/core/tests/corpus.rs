use nca_core::complexity::sample_in_band;
use nca_core::corpus::{generate_corpus, stats_path, CorpusStats, Shard, ShardHeader, ShardKind};
use nca_core::{ComplexityBand, GenConfig};
use proptest::prelude::*;

#[test]
fn header_alone_recovers_every_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    for (n, band) in [
        (2, ComplexityBand::FULL),
        (10, ComplexityBand::between(30.0, 40.0)),
        (15, ComplexityBand::above(50.0)),
    ] {
        let cfg = GenConfig::default()
            .with_alphabet(n)
            .with_band(band)
            .with_seed(n as u64);
        let path = dir.path().join(format!("n{n}.bin"));
        generate_corpus(&cfg, 4 * cfg.seq_len() as u64, &path, 2).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let header = ShardHeader::decode(&bytes).unwrap();
        assert_eq!(header.band(), Some(band));
        let shard = Shard::from_bytes(&bytes).unwrap();
        let ShardKind::Nca(vocab) = shard.kind() else {
            panic!("expected an NCA shard")
        };
        assert_eq!(vocab.alphabet_n, n);
        for i in 0..shard.num_sequences() {
            let expected = sample_in_band(cfg.master_seed, i, &cfg).unwrap().trajectory.grids;
            assert_eq!(shard.grids(i).unwrap(), expected, "n={n} sequence {i}");
        }
    }
}

#[test]
fn sidecar_accounts_for_every_attempt() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GenConfig::default().with_seed(12);
    let run = |name: &str, workers| {
        let path = dir.path().join(name);
        generate_corpus(&cfg, 20_000, &path, workers).unwrap();
        let text = std::fs::read_to_string(stats_path(&path)).unwrap();
        serde_json::from_str::<CorpusStats>(&text).unwrap()
    };
    let a = run("a.bin", 1);
    let b = run("b.bin", 4);
    assert_eq!(a.accepted + a.rejected, a.attempts);
    assert_eq!(a.accepted, a.num_sequences);
    let direct: u64 = (0..a.num_sequences)
        .map(|i| sample_in_band(cfg.master_seed, i, &cfg).unwrap().attempts as u64)
        .sum();
    assert_eq!(a.attempts, direct);
    assert_eq!(a.acceptance_rate.to_bits(), b.acceptance_rate.to_bits());
    assert_eq!(a.ratio_histogram, b.ratio_histogram);
    assert_eq!(a.in_band_fraction, 1.0);
    assert!(a.ratio_histogram.min > 50.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn budget_is_covered_without_a_spare_sequence(budget in 1u64..6000) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig::default().with_band(ComplexityBand::FULL);
        let path = dir.path().join("c.bin");
        let stats = generate_corpus(&cfg, budget, &path, 1).unwrap();
        prop_assert!(stats.total_tokens >= budget);
        prop_assert!(stats.total_tokens < budget + stats.seq_len);
        let shard = Shard::open(&path).unwrap();
        prop_assert_eq!(shard.tokens().len() as u64, stats.total_tokens);
    }
}
