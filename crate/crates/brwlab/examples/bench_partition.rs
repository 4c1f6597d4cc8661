use brwlab::brw::{partition_pair, VarianceProfile};
use brwlab::numerics::{inverse_normal_cdf, LogSumAccumulator, SplitMix, Stream};
use brwlab::tree::{OffspringLaw, SurvivalMode, TreeStream};
use std::time::Instant;

fn main() {
    const M: usize = 1 << 25;
    // raw mix + gaussian throughput
    let t0 = Instant::now();
    let mut acc = 0.0f64;
    let root = SplitMix::root(1);
    for i in 0..M as u32 {
        acc += root.child(i).gaussian(Stream::Gaussian);
    }
    println!("gaussian chain: {:.1} ns/draw (acc {acc:.2})", t0.elapsed().as_secs_f64() / M as f64 * 1e9);

    // inverse cdf alone
    let t0 = Instant::now();
    let mut acc = 0.0f64;
    let mut u = 0.123456789f64;
    for _ in 0..M {
        acc += inverse_normal_cdf(u);
        u = (u * 1.618033988).fract().max(1e-12);
    }
    println!("inverse cdf: {:.1} ns/call (acc {acc:.2})", t0.elapsed().as_secs_f64() / M as f64 * 1e9);

    // lse add throughput
    let t0 = Instant::now();
    let mut lse = LogSumAccumulator::new();
    let mut v = 0.0f64;
    for i in 0..M {
        lse.add(v);
        v = (i % 37) as f64 * 0.1;
    }
    println!("lse add: {:.1} ns/add (total {:.2})", t0.elapsed().as_secs_f64() / M as f64 * 1e9, lse.total().0);

    // full partition
    let n = 24u32;
    let profile = VarianceProfile::linear_decreasing(n);
    let t0 = Instant::now();
    let mut acc = 0.0;
    for r in 0..3u64 {
        let tree = TreeStream::new(OffspringLaw::DeterministicD { d: 2 }, n, 42, SurvivalMode::Raw).unwrap().with_replica(r);
        acc += partition_pair(&tree, 0.9, &profile, None).unwrap().log_w.0;
    }
    println!("n=24 dual-channel partition: {:.3} s/replica ({:.1} ns/vertex, acc {acc:.3})", t0.elapsed().as_secs_f64() / 3.0, t0.elapsed().as_secs_f64() / 3.0 / (2.0f64.powi(25)) * 1e9);

    let cp = VarianceProfile::constant_one(n);
    let t0 = Instant::now();
    let mut acc = 0.0;
    for r in 0..3u64 {
        let tree = TreeStream::new(OffspringLaw::DeterministicD { d: 2 }, n, 42, SurvivalMode::Raw).unwrap().with_replica(r);
        acc += partition_pair(&tree, 0.9, &cp, None).unwrap().log_w.0;
    }
    println!("n=24 single-channel partition: {:.3} s/replica (acc {acc:.3})", t0.elapsed().as_secs_f64() / 3.0);
}
