use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use gwasms::mtest::single_marker_scan;
use gwasms::regress::{Design, FitWorkspace};
use gwasms::search::select_model;
use gwasms::{CriterionConfig, CriterionKind, SearchConfig};
use gwasms_bench::dataset;

fn incremental_fit(c: &mut Criterion) {
    let ds = dataset(1000, 200, 10, 1);
    let design = Design::from_dataset(&ds).unwrap();
    let mut group = c.benchmark_group("fit");
    for q in [5, 20, 60] {
        group.bench_with_input(BenchmarkId::new("add_then_drop", q), &q, |b, &q| {
            b.iter(|| {
                let mut ws = FitWorkspace::new(design, &[]).unwrap();
                for j in 0..q {
                    ws.add_snp(j).unwrap();
                }
                ws.drop_snp(0).unwrap();
                black_box(ws.rss())
            })
        });
    }
    group.finish();
}

fn scan(c: &mut Criterion) {
    let ds = dataset(1000, 5000, 10, 2);
    c.bench_function("scan/n1000_p5000", |b| b.iter(|| single_marker_scan(black_box(&ds)).unwrap()));
}

fn search(c: &mut Criterion) {
    let ds = dataset(600, 2000, 20, 3);
    let config = SearchConfig::new(CriterionConfig::new(CriterionKind::Mbic2, 600, 2000));
    let mut group = c.benchmark_group("search");
    group.sample_size(10);
    group.bench_function("mbic2/n600_p2000_k20", |b| b.iter(|| select_model(black_box(&ds), &config).unwrap()));
    group.finish();
}

criterion_group!(benches, incremental_fit, scan, search);
criterion_main!(benches);
