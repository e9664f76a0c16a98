mod common;

use std::collections::HashMap;

use cdcv::clustering::{
    agglomerate, agglomerate_matrix, fixed_partition, replay_trace, ClusterPartition, ClusteringConfig, DistanceMatrix,
    Linkage, Metric, StoppingRule,
};
use cdcv::indexing::{build_hierarchy, IndexConfig, IndexRule, MarketSource};
use cdcv::panel::ReturnPanel;
use proptest::prelude::*;

fn random_matrix(values: &[f64], n: usize) -> DistanceMatrix {
    let mut d = vec![vec![0.0; n]; n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            d[i][j] = values[k];
            d[j][i] = values[k];
            k += 1;
        }
    }
    DistanceMatrix::from_values(d).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn adapted_single_constraints_hold(
        n in 3usize..14,
        vals in prop::collection::vec(0.01f64..10.0, 91),
        cap in prop::option::of(2usize..6),
        b in 1usize..6,
    ) {
        let d = random_matrix(&vals, n);
        let config = ClusteringConfig {
            metric: Metric::Euclidean,
            linkage: Linkage::AdaptedSingle,
            max_size: cap,
            stop: StoppingRule::Clusters(b),
        };
        let (groups, trace, exhausted) = agglomerate_matrix(&d, &config).unwrap();
        let mut sizes: HashMap<usize, usize> = (0..n).map(|i| (i, 1)).collect();
        for (q, m) in trace.iter().enumerate() {
            let (a, c) = (sizes.remove(&m.0).unwrap(), sizes.remove(&m.1).unwrap());
            prop_assert!(a == 1 || c == 1, "joined two non-singletons");
            if let Some(cap) = cap {
                prop_assert!(a + c <= cap);
            }
            sizes.insert(n + q, a + c);
        }
        prop_assert_eq!(replay_trace(n, &trace).unwrap(), groups.clone());
        prop_assert!(groups.len() >= b.min(n));
        prop_assert!(exhausted || groups.len() == b.min(n).max(1));
    }

    #[test]
    fn partition_covers_every_element(
        n in 2usize..10,
        vals in prop::collection::vec(0.01f64..10.0, 45),
        link in prop::sample::select(vec![Linkage::Single, Linkage::Complete, Linkage::Average]),
        b in 1usize..10,
    ) {
        let d = random_matrix(&vals, n);
        let config = ClusteringConfig { metric: Metric::Euclidean, linkage: link, max_size: None, stop: StoppingRule::Clusters(b) };
        let (groups, trace, exhausted) = agglomerate_matrix(&d, &config).unwrap();
        let mut all: Vec<usize> = groups.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(groups.len(), b.min(n));
        prop_assert_eq!(trace.len(), n - groups.len());
        prop_assert!(!exhausted);
    }
}

#[test]
fn merge_heights_monotone_for_single_and_average() {
    let vals: Vec<f64> = common::uniforms(45, 3).iter().map(|u| u * 5.0 + 0.1).collect();
    let d = random_matrix(&vals, 10);
    for link in [Linkage::Single, Linkage::Complete, Linkage::Average] {
        let config = ClusteringConfig { metric: Metric::Euclidean, linkage: link, max_size: None, stop: StoppingRule::None };
        let (_, trace, _) = agglomerate_matrix(&d, &config).unwrap();
        assert!(trace.windows(2).all(|w| w[0].2 <= w[1].2 + 1e-12), "{link:?}");
    }
}

fn labels_for(assets: &[String], k: usize) -> HashMap<String, String> {
    assets.iter().enumerate().map(|(i, a)| (a.clone(), format!("L{}", i % k))).collect()
}

#[test]
fn fixed_partition_with_sector_labels() {
    let assets: Vec<String> = (0..62).map(|i| format!("A{i}")).collect();
    let p = fixed_partition(&assets, &labels_for(&assets, 10)).unwrap();
    assert_eq!(p.n_clusters(), 10);
    assert_eq!(p.n_assets(), 62);
    for (c, members) in p.clusters.iter().enumerate() {
        assert!(members.iter().all(|a| a[1..].parse::<usize>().unwrap() % 10 == c));
    }
    let one = fixed_partition(&assets, &labels_for(&assets, 1)).unwrap();
    assert_eq!(one.n_clusters(), 1);
    let mut bad = labels_for(&assets, 3);
    bad.remove("A5");
    assert!(fixed_partition(&assets, &bad).is_err());
    let mut extra = labels_for(&assets, 3);
    extra.insert("ZZ".into(), "L0".into());
    assert!(fixed_partition(&assets, &extra).is_err());
}

#[test]
fn kendall_clustering_on_factor_panel_is_deterministic() {
    let d = cdcv::generator::generate(&Default::default()).unwrap();
    let config = ClusteringConfig { stop: StoppingRule::Clusters(3), ..Default::default() };
    assert_eq!(agglomerate(&d.panel, &config).unwrap(), agglomerate(&d.panel, &config).unwrap());
}

fn panel(cols: Vec<Vec<f64>>) -> ReturnPanel {
    let ids = (0..cols.len()).map(|i| format!("S{i}")).collect();
    ReturnPanel::with_synthetic_dates(ids, cols).unwrap()
}

fn partition(groups: &[&[usize]]) -> ClusterPartition {
    ClusterPartition {
        clusters: groups.iter().map(|g| g.iter().map(|i| format!("S{i}")).collect()).collect(),
        trace: vec![],
        exhausted: false,
    }
}

fn plain(rule: IndexRule, source: MarketSource) -> IndexConfig {
    IndexConfig { rule, upsilon: 0.0, market_source: source, ..Default::default() }
}

fn sample_columns(m: usize, t: usize) -> Vec<Vec<f64>> {
    (0..m).map(|j| common::uniforms(t, 50 + j as u64).iter().map(|u| u - 0.5).collect()).collect()
}

#[test]
fn market_is_mean_of_all_assets() {
    let cols = vec![vec![1.0, 2.0, 4.0], vec![2.0, 3.0, 5.0], vec![0.0, 1.0, 3.0], vec![3.0, 4.0, 6.0]];
    let p = panel(cols.clone());
    let h = build_hierarchy(&p, &partition(&[&[0, 1], &[2, 3]]), &plain(IndexRule::SimpleMean, MarketSource::FromAssets), 0, 0)
        .unwrap();
    for t in 0..3 {
        let mean = cols.iter().map(|c| c[t]).sum::<f64>() / 4.0;
        assert!((h.market.values[t] - mean).abs() < 1e-12);
    }
}

#[test]
fn market_from_equal_clusters_matches_market_from_assets() {
    let p = panel(sample_columns(6, 40));
    let part = partition(&[&[0, 3], &[1, 4], &[2, 5]]);
    let a = build_hierarchy(&p, &part, &plain(IndexRule::SimpleMean, MarketSource::FromAssets), 0, 0).unwrap();
    let b = build_hierarchy(&p, &part, &plain(IndexRule::SimpleMean, MarketSource::FromClusterIndexes), 0, 0).unwrap();
    for (x, y) in a.market.values.iter().zip(&b.market.values) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn moving_one_asset_changes_two_cluster_indexes() {
    let p = panel(sample_columns(7, 40));
    let config = IndexConfig { upsilon: 11.0, ..plain(IndexRule::VolatilityWeighted, MarketSource::FromAssets) };
    let before = build_hierarchy(&p, &partition(&[&[0, 1], &[2, 3, 4], &[5, 6]]), &config, 9, 0).unwrap();
    let after = build_hierarchy(&p, &partition(&[&[0, 1], &[2, 3], &[4, 5, 6]]), &config, 9, 0).unwrap();
    let changed: Vec<bool> = before.clusters.iter().zip(&after.clusters).map(|(x, y)| x.values != y.values).collect();
    assert_eq!(changed, vec![false, true, true]);
    assert_eq!(before.market.values, after.market.values);
}
