use srcondense::data::{ImagePlane, PatchDataset};
use srcondense::train::{Checkpoint, TrainConfig, Trainer};
use srcondense::{toy, Error, Model, ModelConfig};

fn toy_data(n: usize) -> PatchDataset<f32> {
    let mut ds = toy::train_dataset::<f32>(2).unwrap();
    ds.truncate(n);
    ds
}

fn trainer(epochs: usize, batch_size: usize, seed: u64) -> Trainer<f32> {
    let cfg = TrainConfig { epochs, batch_size, seed, ..toy::train_config() };
    Trainer::new(Model::build(&toy::model_config(2), seed).unwrap(), cfg).unwrap()
}

#[test]
fn short_run_reduces_loss_with_decaying_lr() {
    let data = toy_data(20);
    let mut t = trainer(5, 2, 0);
    let mut stats = Vec::new();
    t.run(&data, |_, s| {
        stats.push(s.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(stats.len(), 5);
    assert!(stats[4].loss < stats[0].loss, "{} !< {}", stats[4].loss, stats[0].loss);
    assert!(stats.windows(2).all(|w| w[1].lr <= w[0].lr));
    assert!(stats.iter().all(|s| s.loss.is_finite() && s.objective >= s.loss));
}

#[test]
fn masked_weights_stay_zero_every_step() {
    let data = toy_data(4);
    let mut t = trainer(4, 2, 1);
    let mut prev: Vec<Vec<f32>> = t.model.lgc_layers().iter().map(|l| l.mask().data().to_vec()).collect();
    for step in 1..=200 {
        let batch = data.batch(&[step % 4, (step + 1) % 4]);
        t.train_step(&batch, 1e-3, true).unwrap();
        if step % 50 == 0 && step < 200 {
            t.model.condense().unwrap();
            for l in t.model.lgc_layers() {
                t.adam.apply_mask(&l.weight);
            }
        }
        for (l, old) in t.model.lgc_layers().iter().zip(&mut prev) {
            let mask = l.mask().data();
            for (i, (&m, &o)) in mask.iter().zip(old.iter()).enumerate() {
                assert!(m == 0.0 || m == 1.0);
                assert!(!(o == 0.0 && m == 1.0), "{} entry {i} revived at step {step}", l.name());
                if m == 0.0 {
                    assert_eq!(l.weight.value.data()[i], 0.0, "{} entry {i} at step {step}", l.name());
                }
            }
            *old = mask.to_vec();
        }
    }
    assert!(t.model.lgc_layers().iter().all(|l| l.is_fully_condensed()));
}

#[test]
fn full_plan_is_condensed_after_ninety_epochs() {
    let data = toy_data(1);
    let mut t = trainer(180, 1, 2);
    let schedule = t.schedule();
    assert_eq!(schedule.condense_epochs(), vec![30, 60, 90]);
    while t.epoch < 91 {
        let s = t.run_epoch(&data).unwrap();
        assert_eq!(s.condensed, [30, 60, 90].contains(&s.epoch));
    }
    for l in t.model.lgc_layers() {
        assert_eq!(l.stage(), 3, "{}", l.name());
        assert!((l.retained_fraction() - 0.25).abs() < 1e-12);
    }
    assert!((t.retained_fraction() - 0.25).abs() < 1e-12);
}

#[test]
fn resume_is_bit_identical() {
    let data = toy_data(6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("epoch_0007.ckpt");
    let mut a = trainer(12, 2, 3);
    let mut tail = Vec::new();
    a.run(&data, |t, s| {
        if t.epoch == 7 {
            t.checkpoint().save(&path).unwrap();
        }
        if t.epoch > 7 {
            tail.push(s.to_line());
        }
        Ok(())
    })
    .unwrap();
    let ckpt = Checkpoint::<f32>::load(&path).unwrap();
    assert_eq!(ckpt.epoch, 7);
    let mut b = Trainer::resume(ckpt, a.config.clone()).unwrap();
    let mut resumed = Vec::new();
    b.run(&data, |_, s| {
        resumed.push(s.to_line());
        Ok(())
    })
    .unwrap();
    assert_eq!(tail, resumed);
    assert_eq!(a.step, b.step);
    for (p, q) in a.model.parameters().iter().zip(b.model.parameters()) {
        assert_eq!(p.name, q.name);
        let bits = |t: &srcondense::Tensor32| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p.value), bits(&q.value), "{}", p.name);
    }
}

#[test]
fn checkpoint_file_round_trip() {
    let data = toy_data(2);
    let mut t = trainer(8, 2, 4);
    for _ in 0..3 {
        t.run_epoch(&data).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ckpt");
    t.checkpoint().save(&path).unwrap();
    let back = Checkpoint::<f32>::load(&path).unwrap();
    assert_eq!(back.to_bytes().unwrap(), t.checkpoint().to_bytes().unwrap());
    assert_eq!(back.model.config(), t.model.config());
    assert!(Checkpoint::<f64>::load(&path).is_err());
}

#[test]
fn non_finite_loss_names_epoch_and_batch() {
    let mut data = toy_data(4);
    data.pairs[2].lr = data.pairs[2].lr.map(|v| if v > 100.0 { f32::NAN } else { v });
    assert!(!data.pairs[2].lr.all_finite());
    let mut t = trainer(3, 1, 5);
    t.run_epoch(&toy_data(4)).unwrap();
    let want = data.epoch_order(t.epoch_seed(2)).iter().position(|&i| i == 2).unwrap();
    match t.run_epoch(&data) {
        Err(Error::NonFiniteLoss { epoch, batch, value }) => {
            assert_eq!((epoch, batch), (2, want));
            assert!(!value.is_finite());
        }
        other => panic!("expected a non-finite loss, got {other:?}"),
    }
}

#[test]
fn rejects_mismatched_or_frozen_setups() {
    let data = toy_data(2);
    let mut t = trainer(3, 2, 6);
    let wrong = PatchDataset::from_planes([&ImagePlane::<f32>::filled(128, 128, 10.0, srcondense::data::PlaneRole::Y)], 3).unwrap();
    assert!(t.run_epoch(&wrong).is_err());
    assert!(t.run_epoch(&PatchDataset::default()).is_err());
    t.run_epoch(&data).unwrap();
    let tiny = ModelConfig { condense_factor: 1, ..toy::model_config(2) };
    let frozen = Model::<f32>::build(&tiny, 0).unwrap().freeze_for_inference().unwrap();
    assert!(Trainer::new(frozen, toy::train_config()).is_err());
}
