use hstformer::data::{
    gen_synthetic, load_dataset, load_pose, project, read_pose, save_pose, synthetic_dataset, write_pose, Camera,
    MotionKind, SynthOptions,
};
use hstformer::model::checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
use hstformer::model::{EncoderConfig, EncoderKind, HstFormer};
use hstformer::Tensor;
use nalgebra::{Matrix3, Matrix3x4, Vector4};
use proptest::prelude::*;

fn camera_matrix(cam: &Camera) -> Matrix3x4<f64> {
    let k = Matrix3::new(cam.fx, 0.0, cam.cx, 0.0, cam.fy, cam.cy, 0.0, 0.0, 1.0);
    let r = cam.rotation;
    let t = cam.translation;
    let rt = Matrix3x4::new(
        r[0][0], r[0][1], r[0][2], t[0], r[1][0], r[1][1], r[1][2], t[1], r[2][0], r[2][1], r[2][2], t[2],
    );
    k * rt
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pose_file_bytes_round_trip(frames in 1usize..6, channels in 2usize..4, v in prop::collection::vec(-1e4f32..1e4, 5 * 17 * 3)) {
        let n = frames * 17 * channels;
        let pose = Tensor::new(vec![frames, 17, channels], v[..n].iter().map(|&x| x as f64).collect()).unwrap();
        let mut bytes = Vec::new();
        write_pose(&mut bytes, &pose).unwrap();
        let (header, back) = read_pose(bytes.as_slice()).unwrap();
        prop_assert_eq!((header.frames, header.joints, header.channels), (frames, 17, channels));
        prop_assert!(back.data().iter().zip(pose.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let mut again = Vec::new();
        write_pose(&mut again, &back).unwrap();
        prop_assert_eq!(bytes, again);
    }

    #[test]
    fn projection_matches_homogeneous_matrix(seed in 0u64..500, yaw in -1.0f64..1.0, depth in 2000.0f64..8000.0) {
        let (c, s) = (yaw.cos(), yaw.sin());
        let cam = Camera {
            fx: 900.0 + seed as f64,
            fy: 1100.0,
            cx: 480.0,
            cy: 520.0,
            rotation: [[c, 0.0, s], [0.0, -1.0, 0.0], [s, 0.0, -c]],
            translation: [10.0, 900.0, depth],
        };
        let seq = gen_synthetic(seed, 5, MotionKind::Mixed, 0.0).unwrap();
        let px = project(&seq.pose3d, &cam).unwrap();
        let p = camera_matrix(&cam);
        for (xyz, uv) in seq.pose3d.data().chunks_exact(3).zip(px.data().chunks_exact(2)) {
            let h = p * Vector4::new(xyz[0], xyz[1], xyz[2], 1.0);
            prop_assert!((h.x / h.z - uv[0]).abs() < 1e-9 && (h.y / h.z - uv[1]).abs() < 1e-9);
        }
    }
}

#[test]
fn synthetic_pixels_are_projections_of_the_world_poses() {
    let seq = gen_synthetic(4, 30, MotionKind::WalkCycle, 0.0).unwrap();
    let p = camera_matrix(&seq.camera);
    for (xyz, uv) in seq.pose3d.data().chunks_exact(3).zip(seq.pose2d.data().chunks_exact(2)) {
        let h = p * Vector4::new(xyz[0], xyz[1], xyz[2], 1.0);
        assert!((h.x / h.z - uv[0]).abs() < 1e-3 && (h.y / h.z - uv[1]).abs() < 1e-3);
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let config = EncoderConfig::small(3, 8, 2).with_encoders(&[EncoderKind::Ste, EncoderKind::Ptte], true);
    let model = HstFormer::new(config.clone(), 21).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model).unwrap();
    let back = read_checkpoint(bytes.as_slice(), Some(&config)).unwrap();
    assert_eq!(back, model);
    let mut again = Vec::new();
    write_checkpoint(&mut again, &back).unwrap();
    assert_eq!(bytes, again);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.hstw");
    save_checkpoint(&path, &model).unwrap();
    assert_eq!(load_checkpoint(&path, None).unwrap(), model);
}

#[test]
fn checkpoint_rejects_a_different_config() {
    let model = HstFormer::new(EncoderConfig::small(3, 8, 1), 0).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &model).unwrap();
    let other = EncoderConfig::small(3, 8, 2);
    assert!(read_checkpoint(bytes.as_slice(), Some(&other)).is_err());
    assert!(read_checkpoint(&bytes[..bytes.len() - 3], None).is_err());
}

/// `stored` holds exactly the 32-bit narrowing of `original`.
fn same_as_f32(stored: &Tensor, original: &Tensor) -> bool {
    stored.shape() == original.shape()
        && stored.data().iter().zip(original.data()).all(|(a, b)| *a == (*b as f32) as f64)
}

#[test]
fn generated_dataset_loads_back() {
    let opts = SynthOptions { frames: 120, sequences: 3, motion: MotionKind::ArmWave, ..SynthOptions::default() };
    let expected = synthetic_dataset(&opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = hstformer::data::generate_dataset(&opts, dir.path()).unwrap();
    let loaded = load_dataset(&manifest).unwrap();
    assert_eq!(loaded.sequences.len(), 3);
    assert_eq!(loaded.total_frames(), 120);
    for (a, b) in loaded.sequences.iter().zip(&expected.sequences) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.camera, b.camera);
        assert!(same_as_f32(&a.pose2d, &b.pose2d));
        assert!(same_as_f32(a.pose3d.as_ref().unwrap(), b.pose3d.as_ref().unwrap()));
    }
}

#[test]
fn pose_files_on_disk_round_trip() {
    let seq = gen_synthetic(2, 10, MotionKind::WalkCycle, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.hstp");
    save_pose(&path, &seq.pose2d).unwrap();
    let first = std::fs::read(&path).unwrap();
    let (_, back) = load_pose(&path).unwrap();
    save_pose(&path, &back).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}
