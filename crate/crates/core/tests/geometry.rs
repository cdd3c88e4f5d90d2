mod common;

use common::*;
use latmap_core::graph::{geodesic_distances, knn_graph};
use latmap_core::io::{decode_lgpc, encode_lgpc, load_point_cloud, save_point_cloud, Format};
use latmap_core::PointCloud;
use proptest::prelude::*;

/// Neighbor sets by sorting every pairwise distance.
fn brute_knn(rows: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    let n = rows.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist(&rows[i], &rows[j]), j)).collect();
        others.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &(_, j) in &others[..k] {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

/// Floyd-Warshall over the graph's edge list.
fn all_pairs(n: usize, edges: impl Iterator<Item = (usize, usize, f64)>) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for (a, b, w) in edges {
        d[a][b] = d[a][b].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

#[test]
fn knn_matches_exhaustive_oracle() {
    let rows = uniform_rows(50, 5, 21);
    let cloud = PointCloud::from_rows(&rows).unwrap();
    let g = knn_graph(&cloud, 4).unwrap();
    let expect = brute_knn(&rows, 4);
    for i in 0..50 {
        let got: Vec<usize> = g.neighbors(i).iter().map(|e| e.0).collect();
        assert_eq!(got, expect[i]);
    }
}

#[test]
fn geodesics_match_relaxation_oracle() {
    let rows = uniform_rows(30, 3, 5);
    let cloud = PointCloud::from_rows(&rows).unwrap();
    let g = knn_graph(&cloud, 5).unwrap();
    let subset: Vec<usize> = (0..30).collect();
    let got = geodesic_distances(&g, &subset).unwrap();
    let expect = all_pairs(30, g.edges());
    for a in 0..30 {
        for b in 0..30 {
            let (x, y) = (got[(a, b)], expect[a][b]);
            assert!(x == y || (x - y).abs() < 1e-12, "{a},{b}: {x} vs {y}");
        }
    }
}

#[test]
fn file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let rows = gaussian_rows(17, 6, 2);
    // f32-representable values so lgpc is lossless
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| *v as f32 as f64).collect()).collect();
    let cloud = PointCloud::from_rows(&rows).unwrap();
    for (name, fmt) in [("a.lgpc", Format::Lgpc), ("a.csv", Format::Csv)] {
        let path = dir.path().join(name);
        save_point_cloud(&cloud, &path, fmt).unwrap();
        assert_eq!(load_point_cloud(&path, fmt).unwrap(), cloud);
    }
    assert!(load_point_cloud(&dir.path().join("missing.csv"), Format::Csv).is_err());
}

fn cloud_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (6usize..25, 1usize..5).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn knn_symmetric_without_self_edges(rows in cloud_strategy(), k in 1usize..5) {
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let g = knn_graph(&cloud, k).unwrap();
        for (a, b, w) in g.edges() {
            prop_assert!(a != b);
            prop_assert!(w.is_finite());
            prop_assert!(g.neighbors(b).iter().any(|&(x, wx)| x == a && wx == w));
        }
    }

    #[test]
    fn geodesic_bounds(rows in cloud_strategy(), k in 1usize..5) {
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let g = knn_graph(&cloud, k).unwrap();
        let subset: Vec<usize> = (0..cloud.len()).collect();
        let d = geodesic_distances(&g, &subset).unwrap();
        let n = subset.len();
        for a in 0..n {
            prop_assert_eq!(d[(a, a)], 0.0);
            for b in 0..n {
                prop_assert_eq!(d[(a, b)], d[(b, a)]);
                if d[(a, b)].is_finite() {
                    prop_assert!(d[(a, b)] >= cloud.distance(a, b) - 1e-9);
                }
                for c in 0..n {
                    if d[(a, c)].is_finite() && d[(c, b)].is_finite() {
                        prop_assert!(d[(a, b)] <= d[(a, c)] + d[(c, b)] + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn lgpc_bit_exact(values in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..60), dim in 1usize..4) {
        let n = values.len() / dim;
        prop_assume!(n >= 1);
        let data: Vec<f64> = values[..n * dim].iter().map(|v| *v as f64).collect();
        let cloud = PointCloud::new(n, dim, data).unwrap();
        let bytes = encode_lgpc(&cloud);
        let back = decode_lgpc(&bytes).unwrap();
        prop_assert_eq!(encode_lgpc(&back), bytes);
        prop_assert_eq!(back, cloud);
    }
}
