use isac_track::config::RunConfig;
use isac_track::container::{decode, encode, ContainerError, CHECKPOINT_MAGIC};
use proptest::prelude::*;

proptest! {
    #[test]
    fn container_round_trip_is_bit_exact(
        bits in proptest::collection::vec(any::<u64>(), 0..200),
        note in ".{0,40}",
    ) {
        let payload: Vec<f64> = bits.iter().map(|b| f64::from_bits(*b)).collect();
        let bytes = encode(CHECKPOINT_MAGIC, 3, &note, &payload).unwrap();
        let (h, back): (String, Vec<f64>) = decode(CHECKPOINT_MAGIC, 3, &bytes).unwrap();
        prop_assert_eq!(h, note);
        let back_bits: Vec<u64> = back.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(back_bits, bits);
    }

    #[test]
    fn any_flipped_byte_is_detected(len in 1usize..50, pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let payload: Vec<f64> = (0..len).map(|i| i as f64 * 0.25).collect();
        let mut bytes = encode(CHECKPOINT_MAGIC, 1, &"h", &payload).unwrap();
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        let r: Result<(String, Vec<f64>), ContainerError> = decode(CHECKPOINT_MAGIC, 1, &bytes);
        prop_assert!(r.is_err());
    }

    #[test]
    fn flat_config_round_trips(seed in 0..=i64::MAX as u64, n_tx in 2usize..20, alpha in 0.01..2.0f64) {
        let mut c = RunConfig::default();
        c.seed = seed;
        c.system.n_tx = n_tx;
        c.train.alpha = alpha;
        let back = RunConfig::parse(&c.to_flat_string()).unwrap();
        prop_assert_eq!(back, c);
    }
}
