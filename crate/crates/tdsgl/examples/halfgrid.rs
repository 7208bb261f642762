use tdsgl::config::{Hyperparameters, Variant};
use tdsgl::experiment::{self, PreparedData};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let zipf: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.1);
    let intp: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.92);
    let tmp = std::path::PathBuf::from("/tmp/halfgrid");
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = tdsgl::synth::SynthConfig {
        num_users: 946, num_items: 7719, interactions: 46_417,
        topics: 20, zipf_exponent: zipf, in_topic_prob: intp, seed: 77,
    };
    let raw = tmp.join(format!("raw_{zipf}_{intp}.txt"));
    let ds = tdsgl::synth::generate(&cfg).unwrap();
    tdsgl::synth::write_adjacency(&raw, &ds).unwrap();
    let prep = tmp.join(format!("prep_{zipf}_{intp}"));
    experiment::prepare(&raw, &prep, (0.8, 0.1, 0.1), 77, 8).unwrap();
    let prepared = PreparedData::load(&prep).unwrap();
    let runs = tmp.join("runs");

    let base = Hyperparameters {
        dim: 32, layers: 3, batch: 2048, epochs: 80, eval_every: 5, patience: 80,
        seed: 500, ..Default::default()
    };
    let grid: Vec<(&str, Variant, u32, f64)> = vec![
        ("sgl-ed t.2", Variant::SglEd, 8, 0.2),
        ("tdsgl b8 t.2", Variant::Tdsgl, 8, 0.2),
        ("tdsgl b6 t.2", Variant::Tdsgl, 6, 0.2),
        ("sgl-ed t.5", Variant::SglEd, 8, 0.5),
        ("tdsgl b8 t.5", Variant::Tdsgl, 8, 0.5),
        ("tdsgl b6 t.5", Variant::Tdsgl, 6, 0.5),
        ("tdsgl-tf b8 t.2", Variant::TdsglTf, 8, 0.2),
        ("tdsgl-gif t.5", Variant::TdsglGif, 8, 0.5),
    ];
    println!("corpus zipf={zipf} in_topic={intp}");
    for (label, variant, beta, tau) in grid {
        let mut h = base.clone();
        h.beta = beta;
        h.tau = tau;
        let t = std::time::Instant::now();
        let run = experiment::run_training(&prepared, variant, &h, &runs, false).unwrap();
        println!("{label:–<18} val {:.4} test {:.4} (best ep {}, {:.0}s)",
            run.val_recall, run.test.recall, run.best_epoch, t.elapsed().as_secs_f64());
    }
}
