use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hrgm::exec::Exec;
use hrgm::mcmc::cluster::{run_cluster_chain, ClusterSampler};
use hrgm::mcmc::known::run_chain;
use hrgm::mcmc::{ChainConfig, Flavor};
use hrgm::priors::HyperParams;
use hrgm::simgen::{gen_cluster_data, gen_known_groups, ScenarioConfig};
use hrgm::summary::coclustering;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn cluster_sweep(c: &mut Criterion) {
    let sc = ScenarioConfig { n_per_group: vec![500, 500], ..ScenarioConfig::desk_cluster() };
    let (mut data, _) = gen_cluster_data(&sc, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    data.standardize().unwrap();
    let cfg = ChainConfig::desk();
    let mut group = c.benchmark_group("cluster_sweep_n1000");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s =
            ClusterSampler::from_dataset(&data, sc.mask().unwrap(), HyperParams::default(), &cfg, Flavor::Dm, &mut rng)
                .unwrap();
        s.exec = exec;
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| s.step(&mut rng).unwrap()));
    }
    group.finish();
}

fn coclustering_matrix(c: &mut Criterion) {
    let sc = ScenarioConfig { n_per_group: vec![200, 200], ..ScenarioConfig::desk_cluster() };
    let (mut data, _) = gen_cluster_data(&sc, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    data.standardize().unwrap();
    let cfg = ChainConfig::desk().with_schedule(1000, 0, 2);
    let samples = run_cluster_chain(&data, &sc.mask().unwrap(), &HyperParams::default(), &cfg, Flavor::Dm).unwrap();
    let mut group = c.benchmark_group("coclustering_n400");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| coclustering(&samples, exec).unwrap()));
    }
    group.finish();
}

fn independent_chains(c: &mut Criterion) {
    let sc = ScenarioConfig::desk_known();
    let (mut data, _) = gen_known_groups(&sc, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    data.standardize().unwrap();
    let mask = sc.mask().unwrap();
    let hyper = HyperParams::default();
    let mut group = c.benchmark_group("four_known_chains");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map_range(4, |chain| {
                    let cfg = ChainConfig::desk().with_schedule(500, 250, 5).with_seed(chain as u64);
                    run_chain(&data, &mask, &hyper, &cfg).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, cluster_sweep, coclustering_matrix, independent_chains);
criterion_main!(benches);
