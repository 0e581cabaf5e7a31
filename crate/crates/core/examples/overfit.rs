//! Overfits FinalNet on four synthetic translated pairs and prints the
//! endpoint error of the network and of the block-matching guide.
//!
//! Usage: `cargo run --release -p flowcnn --example overfit [lr] [lr_after_half] [iterations]`

use std::time::Instant;

use flowcnn::blockmatch::BlockMatchConfig;
use flowcnn::data::synthetic::translation_sample;
use flowcnn::graphs::build_finalnet;
use flowcnn::train::{evaluate, TrainConfig, Trainer};

fn main() -> flowcnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let lr: f64 = args.next().map_or(Ok(1e-3), |s| s.parse()).expect("learning rate");
    let lr_after_half: f64 = args.next().map_or(Ok(lr / 10.0), |s| s.parse()).expect("learning rate");
    let iterations: usize = args.next().map_or(Ok(2000), |s| s.parse()).expect("iterations");
    let shifts = [(1.3, -0.6), (-2.4, 0.7), (0.4, 1.8), (2.7, 2.2)];
    let bm = BlockMatchConfig::default();
    let data = shifts
        .iter()
        .enumerate()
        .map(|(i, &s)| translation_sample(format!("pair{i}"), 32, 32, s, 4.0, 100 + i as u64, &bm))
        .collect::<flowcnn::Result<Vec<_>>>()?;
    let cfg = TrainConfig {
        batch_size: 4,
        lr_initial: lr,
        lr_after_half,
        epochs: iterations,
        crop_size: 0,
        flip: false,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(build_finalnet(7), cfg)?;
    let start = Instant::now();
    let run = trainer.fit(&data, None, None, &mut |m| {
        if m.epoch % 50 == 0 {
            println!("iteration {:5}  loss {:10.4}  train EPE {:.4}", m.epoch, m.mean_ne, m.train_epe);
        }
    })?;
    let windows: Vec<String> = run
        .iteration_losses
        .chunks(50)
        .map(|w| format!("{:.1}", w.iter().sum::<f64>() / w.len() as f64))
        .collect();
    println!("50-iteration mean loss: {}", windows.join(" "));
    let report = evaluate(&trainer.net, &data, 0)?;
    println!(
        "guide EPE {:.4}  network EPE {:.4}  ({:.1} s)",
        report.mean_block_matching(),
        report.mean_network(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
