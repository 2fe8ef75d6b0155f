use cylsfm::datasets::synthetic::seam_toy_sequences;
use cylsfm::estimate::train::{train, StepRecord, TrainConfig, TrainState};
use cylsfm::estimate::{Checkpoint, NetSpec, Snippet};
use cylsfm::synth::loss::SmoothMode;
use cylsfm::{CylCamera, LossConfig};

fn toy(walks: usize) -> Vec<Snippet> {
    let cam = CylCamera::new(128, 32).unwrap();
    let mut out = Vec::new();
    for seq in seam_toy_sequences(walks, &cam, 1).unwrap() {
        for k in 1..seq.images.len() - 1 {
            out.push(
                Snippet::new(
                    seq.images[k].clone(),
                    vec![seq.images[k - 1].clone(), seq.images[k + 1].clone()],
                    cam,
                )
                .unwrap(),
            );
        }
    }
    out
}

fn toy_loss() -> LossConfig {
    LossConfig {
        smooth_mode: SmoothMode::ImageAware,
        lambda_m: 0.02,
        ..Default::default()
    }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn run(data: &[Snippet], steps: u64) -> (Vec<StepRecord>, Vec<u8>) {
    let cfg = TrainConfig {
        steps,
        seed: 5,
        ..Default::default()
    };
    let mut st = TrainState::new(NetSpec::default(), &cfg).unwrap();
    let log = train(&mut st, data, &cfg, &toy_loss(), |_, _| Ok(())).unwrap();
    (log, st.checkpoint(&toy_loss(), "").to_bytes())
}

#[test]
fn same_seed_same_trace() {
    let data = toy(2);
    let (a, ca) = single_thread(|| run(&data, 25));
    let (b, cb) = single_thread(|| run(&data, 25));
    assert_eq!(a, b);
    assert_eq!(ca, cb);
}

#[test]
fn resume_continues_the_uninterrupted_run() {
    let data = toy(2);
    let (full, full_ck) = run(&data, 30);
    let (head, mid) = run(&data, 12);
    let cfg = TrainConfig {
        steps: 30,
        seed: 5,
        ..Default::default()
    };
    let mut st = TrainState::from_checkpoint(&Checkpoint::from_bytes(&mid).unwrap()).unwrap();
    assert_eq!(st.step, 12);
    let tail = train(&mut st, &data, &cfg, &toy_loss(), |_, _| Ok(())).unwrap();
    assert_eq!([head, tail].concat(), full);
    assert_eq!(st.checkpoint(&toy_loss(), "").to_bytes(), full_ck);
}

#[test]
fn toy_training_loss_drops() {
    let data = toy(25);
    assert_eq!(data.len(), 50);
    let (log, _) = run(&data, 2000);
    let w = 50;
    let mean = |r: &[StepRecord]| r.iter().map(|x| x.terms.total).sum::<f64>() / w as f64;
    let (first, last) = (mean(&log[..w]), mean(&log[log.len() - w..]));
    assert!(last < 0.7 * first, "{first} -> {last}");
}
