use optnav::optim::proxy::*;
use optnav::optim::OptimizerConfig;

fn main() {
    for block in [0u64, 1000, 2000, 3000] {
        let seeds: Vec<u64> = (block..block + 64).collect();
        let t = ProxyTask {
            curvatures: vec![1.0, 4.0],
            noise_std: 1.0,
            batch_size: 16,
            steps: 900,
            initial_weights: vec![0.04, 0.04],
        };
        let bal = measure_rates_auto(&t, &OptimizerConfig::ballistic(8e-4, 0.9), &seeds, 30, 2.2).unwrap();
        let sgd = measure_rates_auto(&t, &OptimizerConfig::sgd(1.2e-3), &seeds, 0, 2.2).unwrap();
        println!(
            "block={block}: ballistic ratio {:.3} (r={:.5},{:.5})  sgd ratio {:.3} (r={:.5},{:.5})",
            bal[1] / bal[0], bal[0], bal[1], sgd[1] / sgd[0], sgd[0], sgd[1]
        );
    }
}
