use std::time::Instant;

use freqlens_core::nnet::{forward_batch, loss_and_grads, BatchView, Model, ModelConfig};

#[test]
#[ignore]
fn measure_throughput() {
    let model: Model<f32> = Model::init(ModelConfig::compact(1, 4), 7);
    println!("params: {}", model.parameter_count());
    let side = 32;
    let n = 128;
    let sample_len = side * side;
    let data: Vec<f32> = (0..n * sample_len)
        .map(|i| ((i * 2654435761usize) % 1000) as f32 / 1000.0)
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();

    // warmup
    let batch = BatchView { data: &data, labels: &labels, count: n, sample_len, side };
    let _ = loss_and_grads(&model, &batch).unwrap();

    let iters = 10;
    let t0 = Instant::now();
    for _ in 0..iters {
        let _ = loss_and_grads(&model, &batch).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64() / iters as f64;
    // FLOP estimate: 9 convs fwd ~16.7 MMAC/sample => ~33.4 MFLOP fwd, x3 for fwd+bwd
    let flop = 3.0 * 33.4e6 * n as f64;
    println!(
        "train iter (batch {n}): {:.1} ms  => {:.1} GFLOP/s",
        dt * 1e3,
        flop / dt / 1e9
    );

    let t0 = Instant::now();
    for _ in 0..iters {
        let _ = forward_batch(&model, &data, n, side);
    }
    let dt = t0.elapsed().as_secs_f64() / iters as f64;
    let flop = 33.4e6 * n as f64;
    println!(
        "forward (batch {n}): {:.1} ms  => {:.1} GFLOP/s",
        dt * 1e3,
        flop / dt / 1e9
    );
}
