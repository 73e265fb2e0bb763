mod common;

use gwasms::cluster::{cluster_snps, deduplicate};
use gwasms::genotype::Dataset;

#[test]
fn representatives_recluster_to_the_same_count() {
    for seed in 0..50 {
        let mut rng = common::rng(seed);
        let g = common::matrix(common::ld_columns(&mut rng, 40, 30));
        for c in [0.3, 0.7, 0.95] {
            let a = cluster_snps(&g, c, 30).unwrap();
            let reps = g.select_columns(&a.representatives);
            let again = cluster_snps(&reps, c, 30).unwrap();
            assert_eq!(again.effective_count, a.effective_count);
            for (j, &cid) in a.cluster_id.iter().enumerate() {
                assert!(a.representatives[cid] <= j);
            }
        }
    }
}

#[test]
fn deduplicate_is_idempotent() {
    for seed in 0..50 {
        let mut rng = common::rng(100 + seed);
        let g = common::matrix(common::ld_columns(&mut rng, 8, 20));
        let ds = Dataset::from_genotypes(g);
        let (once, map) = deduplicate(&ds).unwrap();
        let (twice, map2) = deduplicate(&once).unwrap();
        assert_eq!(twice, once);
        assert!(map2.is_empty());
        for (&removed, &kept) in &map {
            assert!(kept < removed);
            assert_eq!(ds.genotypes.column(removed), ds.genotypes.column(kept));
        }
        assert_eq!(once.n_snps() + map.len(), ds.n_snps());
    }
}

#[test]
fn exact_duplicates_never_found_extra_clusters() {
    for seed in 0..30 {
        let mut rng = common::rng(200 + seed);
        let g = common::matrix(common::ld_columns(&mut rng, 12, 25));
        let ds = Dataset::from_genotypes(g.clone());
        let (reduced, _) = deduplicate(&ds).unwrap();
        let full = cluster_snps(&g, 0.999, 25).unwrap().effective_count;
        let dedup = cluster_snps(&reduced.genotypes, 0.999, 25).unwrap().effective_count;
        assert_eq!(full, dedup);
    }
}

#[test]
fn assignment_tsv() {
    let g = common::matrix(vec![vec![-1, 0, 1], vec![-1, 0, 1], vec![1, 0, 1]]);
    let ds = Dataset::from_genotypes(g);
    let a = cluster_snps(&ds.genotypes, 0.9, 10).unwrap();
    let mut buf = Vec::new();
    a.write_tsv(&mut buf, &ds.meta).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "snp_id\tcluster_id\trepresentative_id");
    assert!(rows[2].ends_with(ds.snp_id(0)));
}
