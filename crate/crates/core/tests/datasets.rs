use std::io::Write;

use latent_bandits::datasets::{
    build_dataset_model, ingest_ratings, Catalog, DatasetConfig, DatasetError, PmfConfig, RatingsSource, VarianceMode,
};

fn write_ratings(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("ratings.dat");
    let mut f = std::fs::File::create(&path).unwrap();
    // 40 users x 30 items, every user rates every item except a diagonal band
    for u in 1..=40u64 {
        for i in 1..=30u64 {
            if (u + i) % 7 != 0 {
                let r = 1 + (u * 3 + i * 5) % 5;
                writeln!(f, "{u}::{i}::{r}::97830{u}").unwrap();
            }
        }
    }
    path
}

#[test]
fn ingest_from_file_filters_and_reindexes() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_ratings(dir.path());
    let (table, counts) = ingest_ratings(&path, 1, 1).unwrap();
    assert_eq!(counts.raw_users, 40);
    assert_eq!(counts.raw_items, 30);
    assert_eq!(table.user_ids.len(), 40);
    assert_eq!(table.triples.len(), counts.ratings);
    assert!(table.triples.iter().all(|&(u, i, r)| u < 40 && i < 30 && (1.0..=5.0).contains(&r)));

    let (strict, c) = ingest_ratings(&path, 26, 20).unwrap();
    assert_eq!((c.users, c.items, c.ratings), (29, 30, 754));
    let mut per_user = vec![0; strict.user_ids.len()];
    let mut per_item = vec![0; strict.item_ids.len()];
    for &(u, i, _) in &strict.triples {
        per_user[u] += 1;
        per_item[i] += 1;
    }
    assert!(per_user.iter().all(|&n| n >= 26));
    assert!(per_item.iter().all(|&n| n >= 20));
}

#[test]
fn missing_file_is_an_io_error() {
    let err = ingest_ratings(std::path::Path::new("/no/such/ratings.dat"), 1, 1).unwrap_err();
    assert!(matches!(err, DatasetError::Io { .. }));
}

#[test]
fn file_pipeline_builds_a_replayable_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_ratings(dir.path());
    let cfg = DatasetConfig {
        source: RatingsSource::File {
            path,
            min_user_ratings: 5,
            min_item_ratings: 5,
        },
        pmf: PmfConfig {
            d: 3,
            learning_rate: 0.01,
            epochs: 20,
            ..PmfConfig::default()
        },
        num_states: 3,
        pairing: vec![(0, 1)],
        catalog: Catalog::First(8),
        variance: VarianceMode::ThreeNn,
        seed: 11,
    };
    let a = build_dataset_model(&cfg).unwrap();
    let b = build_dataset_model(&cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.model.num_states(), 3);
    assert_eq!(a.model.num_arms(), 8);
    assert_eq!(a.provenance.catalog_item_ids.len(), 8);
    assert_eq!(a.provenance.super_user_ids.len(), 3);
}
