use std::fs;

use data_agent_core::data::{gen_mixture, gen_rings, inject_label_noise, load, load_csv, save, split_path, CsvOptions};
use data_agent_core::{Error, MixtureSpec, NoiseSpec};
use proptest::prelude::*;

fn small_spec(per_component: usize, std: f64, seed: u64) -> MixtureSpec {
    MixtureSpec {
        train_per_component: per_component,
        test_per_component: per_component / 3 + 1,
        std,
        ..MixtureSpec::benchmark(seed)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn generators_are_pure_and_splits_disjoint(
        per_component in 1usize..20, std in 0.01f64..2.0, seed in any::<u64>(), rings in any::<bool>(),
    ) {
        let make = || if rings {
            gen_rings(3, per_component, per_component / 2 + 1, std, seed).unwrap()
        } else {
            gen_mixture(&small_spec(per_component, std, seed)).unwrap()
        };
        let (a, b) = (make(), make());
        prop_assert_eq!(&a, &b);
        prop_assert!(a.validate().is_ok());
        let mut all: Vec<usize> = a.train_ids.iter().chain(&a.test_ids).copied().collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), a.len());
        prop_assert!(a.train_ids.iter().all(|i| a.test_ids.binary_search(i).is_err()));
    }

    #[test]
    fn noisy_datasets_round_trip_through_files(
        per_component in 1usize..10, rate in 0.0f64..0.9, seed in any::<u64>(),
    ) {
        let ds = gen_mixture(&small_spec(per_component, 0.3, seed)).unwrap();
        let (noisy, flipped) = inject_label_noise(&ds, &NoiseSpec::new(rate, seed)).unwrap();
        prop_assert_eq!(flipped.len(), (rate * ds.train_ids.len() as f64).round() as usize);
        prop_assert_eq!(&noisy.test_ids, &ds.test_ids);
        for &i in &ds.test_ids {
            prop_assert_eq!(noisy.labels[i], ds.labels[i]);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.data");
        save(&noisy, &path).unwrap();
        prop_assert_eq!(load(&path).unwrap(), noisy);
    }
}

#[test]
fn default_benchmark_round_trips() {
    let ds = gen_mixture(&MixtureSpec::benchmark(0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.data");
    save(&ds, &path).unwrap();
    assert!(split_path(&path).exists());
    let back = load(&path).unwrap();
    assert_eq!(back, ds);
    assert!(back.consistency.is_none());
}

#[test]
fn corrupt_files_name_the_line() {
    let ds = gen_mixture(&small_spec(2, 0.3, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.data");
    save(&ds, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let broken = lines.len() - 1;
    lines[broken] = "9,oops,0.0,0.0";
    fs::write(&path, lines.join("\n")).unwrap();
    match load(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, broken + 1),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn csv_ingestion_stratifies_and_standardizes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let mut body = String::from("x,y,label\n");
    for i in 0..40 {
        body.push_str(&format!(
            "{},{},{}\n",
            i as f64,
            (i * 3 % 7) as f64,
            if i % 4 == 0 { 1 } else { 0 }
        ));
    }
    fs::write(&path, body).unwrap();
    let opts = CsvOptions {
        label_column: "label".into(),
        train_fraction: 0.75,
        seed: 3,
        standardize: true,
    };
    let ds = load_csv(&path, &opts).unwrap();
    assert_eq!(ds.class_count, 2);
    assert_eq!(ds.train_ids.len(), 30);
    let train = ds.train();
    let minority = train.labels.iter().filter(|&&l| l == 1).count();
    // 7.5 and 22.5 tie on the remainder; the lower class takes the extra slot
    assert_eq!(minority, 7);
    for c in 0..2 {
        let col: Vec<f64> = train.features.iter_rows().map(|r| r[c]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-12);
    }
    let bad = CsvOptions {
        label_column: "missing".into(),
        ..opts
    };
    assert!(load_csv(&path, &bad).is_err());
}
