use corrmax::moments::DistributionSpec;
use corrmax::sim::{self, PnSchedule};

fn seeds(root: u64, count: u64) -> Vec<u64> {
    (0..count).map(|i| sim::rng::derive_seed(root, i)).collect()
}

fn main() {
    let normal = DistributionSpec::normal(0.0, 1.0).unwrap();
    let cks = [250usize, 500, 1000, 2000];
    for (name, sched) in [
        ("C4 proportional", PnSchedule::proportional(1.0).unwrap()),
        ("C5 ratio_band", PnSchedule::ratio_band(0.5, 2.0, 1).unwrap()),
    ] {
        let recs = sim::run_ll_experiment(&normal, &sched, &cks, &seeds(0, 20)).unwrap();
        let at = |r: &sim::ExperimentRecord, n: usize| {
            r.normalized.iter().find(|pt| pt.n == n).unwrap().l_ll.unwrap()
        };
        let l250: Vec<f64> = recs.iter().map(|r| at(r, 250)).collect();
        let med250 = sim::median(&l250);
        let vs_median = recs
            .iter()
            .filter(|r| (at(r, 2000) - 2.0).abs() < (med250 - 2.0).abs())
            .count();
        let vs_seed = recs
            .iter()
            .filter(|r| (at(r, 2000) - 2.0).abs() < (at(r, 250) - 2.0).abs())
            .count();
        let l2000: Vec<f64> = recs.iter().map(|r| at(r, 2000)).collect();
        println!(
            "{name}: med250={:.3} med2000={:.3} | closer-than-median250: {}/20 | per-seed: {}/20",
            med250, sim::median(&l2000), vs_median, vs_seed
        );
    }
}
