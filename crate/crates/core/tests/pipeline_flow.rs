use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stbayes::model::{read_panel_csv, write_panel_csv};
use stbayes::pipeline::{
    aggregate, elbow_curve, ingest, kmeans, split_sites, synthetic_records, write_records_csv, ConnectionRecord,
    SlotSpec, SyntheticSpec, DAY_SECONDS,
};
use stbayes::SiteGrid;

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_stations: 40,
        n_hotspots: 5,
        n_users: 200,
        n_days: 6,
        ..SyntheticSpec::default()
    }
}

#[test]
fn ingest_counts_users_and_stations() {
    let csv = "user_id,station_id,lon,lat,start_iso8601,end_iso8601\n\
               u1,s1,121.4,31.2,2014-06-01T08:00:00Z,2014-06-01T08:10:00Z\n\
               u2,s1,121.4,31.2,2014-06-01 09:00:00,2014-06-01 09:00:00\n\
               u1,s2,121.5,31.3,2014-06-02T00:00:00+08:00,2014-06-02T01:00:00+08:00\n\
               u3,s3,121.5,31.3,2014-06-02T02:00:00Z,2014-06-02T01:00:00Z\n\
               u4,s4,121.5,31.3,yesterday,2014-06-02T01:00:00Z\n";
    let ing = ingest(csv.as_bytes(), None).unwrap();
    assert_eq!(ing.records.len(), 3);
    assert_eq!(ing.unique_users(), 2);
    assert_eq!(ing.stations.len(), 2);
    assert_eq!(ing.records[1].duration(), 0.0);
    assert_eq!(ing.records[0].duration(), 600.0);
    assert_eq!(ing.rejected.len(), 2);
    assert_eq!(ing.rejected[0].line, 5);
}

#[test]
fn records_csv_round_trips_through_ingest() {
    let recs = synthetic_records(&small_spec(), 3).unwrap();
    let mut buf = Vec::new();
    write_records_csv(&recs, &mut buf).unwrap();
    let ing = ingest(buf.as_slice(), None).unwrap();
    assert!(ing.rejected.is_empty());
    assert_eq!(ing.records, recs);
}

#[test]
fn synthetic_walkthrough_conserves_mass_and_round_trips() {
    let recs = synthetic_records(&small_spec(), 11).unwrap();
    let mut buf = Vec::new();
    write_records_csv(&recs, &mut buf).unwrap();
    let ing = ingest(buf.as_slice(), None).unwrap();
    let clustering = kmeans(&ing.stations, 8, 5, 300).unwrap();
    let agg = aggregate(&ing.records, &ing.stations, &clustering, SlotSpec::default()).unwrap();
    let raw: f64 = recs.iter().map(|r| r.duration()).sum();
    let total: f64 = agg.totals.iter().sum();
    assert!((total - raw).abs() <= 1e-9 * raw);
    assert!(agg.panel.n_slots() >= 6);
    for t in 0..agg.panel.n_slots() {
        assert!(agg.panel.features(t).column(0).iter().all(|&v| v == 1.0));
    }

    let mut first = Vec::new();
    write_panel_csv(&agg.panel, &mut first).unwrap();
    let back = read_panel_csv(first.as_slice()).unwrap();
    assert_eq!(back, agg.panel);
    let mut second = Vec::new();
    write_panel_csv(&back, &mut second).unwrap();
    assert_eq!(first, second);

    let again = aggregate(&ing.records, &ing.stations, &clustering, SlotSpec::default()).unwrap();
    assert_eq!(again.panel, agg.panel);
}

#[test]
fn kmeans_is_deterministic_on_100_stations() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = SiteGrid::from_coords((0..100).map(|_| [rng.random::<f64>() * 5e3, rng.random::<f64>() * 5e3]).collect())
        .unwrap();
    let a = kmeans(&g, 10, 77, 300).unwrap();
    let b = kmeans(&g, 10, 77, 300).unwrap();
    assert_eq!(a.assignment, b.assignment);
    assert_eq!(a.wcss, b.wcss);
}

#[test]
fn split_sites_partitions() {
    let recs = synthetic_records(&small_spec(), 4).unwrap();
    let ing = ingest(
        {
            let mut b = Vec::new();
            write_records_csv(&recs, &mut b).unwrap();
            std::io::Cursor::new(b)
        },
        None,
    )
    .unwrap();
    let c = kmeans(&ing.stations, 12, 1, 300).unwrap();
    let panel = aggregate(&ing.records, &ing.stations, &c, SlotSpec::default()).unwrap().panel;
    let n = panel.n_sites();
    let none = split_sites(&panel, 0, 3).unwrap();
    assert!(none.test.is_none());
    assert_eq!(none.train, panel);
    let s = split_sites(&panel, 5, 3).unwrap();
    let t = split_sites(&panel, 5, 3).unwrap();
    assert_eq!(s.test_idx, t.test_idx);
    let mut all: Vec<usize> = s.train_idx.iter().chain(&s.test_idx).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..n).collect::<Vec<_>>());
    assert_eq!(s.test.unwrap().n_sites(), 5);
    assert!(split_sites(&panel, n, 3).is_err());
}

fn arb_records() -> impl Strategy<Value = Vec<(usize, usize, f64, f64)>> {
    prop::collection::vec((0usize..6, 0usize..4, 0.0..5.0 * DAY_SECONDS, 0.0..2.0 * DAY_SECONDS), 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_conserves_mass(raw in arb_records(), slot_hours in 1.0f64..48.0, k in 1usize..6) {
        let g = SiteGrid::new(
            (0..6).map(|i| format!("s{i}")).collect(),
            (0..6).map(|i| [i as f64 * 100.0, (i % 2) as f64 * 50.0]).collect(),
        ).unwrap();
        let recs: Vec<ConnectionRecord> = raw
            .iter()
            .map(|&(s, u, start, dur)| ConnectionRecord {
                user_id: format!("u{u}"),
                station_id: format!("s{s}"),
                lon: 0.0,
                lat: 0.0,
                start,
                end: start + dur,
            })
            .collect();
        let c = kmeans(&g, k, 2, 100).unwrap();
        let agg = aggregate(&recs, &g, &c, SlotSpec { length_secs: slot_hours * 3600.0, origin: None }).unwrap();
        let raw_total: f64 = recs.iter().map(|r| r.duration()).sum();
        let total: f64 = agg.totals.iter().sum();
        prop_assert!((total - raw_total).abs() <= 1e-9 * raw_total.max(1.0));
        prop_assert_eq!(agg.kept.len() + agg.dropped.len(), k);
    }

    #[test]
    fn wcss_nonincreasing_over_lloyd_and_k(seed in 0u64..1000, n in 3usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = SiteGrid::from_coords((0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()).unwrap();
        let k = 1 + (seed as usize) % n;
        let c = kmeans(&g, k, seed, 300).unwrap();
        for w in c.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let hi = n.min(8);
        let curve = elbow_curve(&g, 1..=hi, seed).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].wcss <= w[0].wcss * (1.0 + 1e-12), "{:?}", curve);
        }
    }
}
