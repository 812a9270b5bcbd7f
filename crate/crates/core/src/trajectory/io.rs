//! JSON files for demonstrations and object models.
//!
//! Parsing walks a `serde_json::Value` by hand so that every error carries
//! the path of the offending field, e.g. `frames[3].object_pose.wxyz`.

use std::path::Path;

use serde_json::{json, Map, Value};

use super::{DemoFrame, DemoTrajectory, HandLayout, ObjectModel, TrajectoryError};
use crate::transform::{RigidTransform, Vec3};

/// Quaternions farther than this from unit norm are rejected.
const QUAT_NORM_TOL: f64 = 1e-6;

fn pose_value(t: &RigidTransform) -> Value {
    json!({ "xyz": t.xyz(), "wxyz": t.wxyz() })
}

pub fn trajectory_to_json(traj: &DemoTrajectory) -> String {
    let frames: Vec<Value> = traj
        .frames
        .iter()
        .map(|f| {
            let flat: Vec<f64> = f.hand_keypoints.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
            json!({
                "hand_keypoints": flat,
                "wrist_pose": pose_value(&f.wrist_pose),
                "object_pose": pose_value(&f.object_pose),
            })
        })
        .collect();
    let doc = json!({
        "layout_version": traj.layout.version,
        "dt": traj.dt,
        "object_ref": traj.object_ref,
        "lift_index": traj.lift_index,
        "frames": frames,
    });
    serde_json::to_string_pretty(&doc).expect("json values serialize")
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, TrajectoryError> {
    v.as_object()
        .ok_or_else(|| TrajectoryError::schema(path, "expected an object"))
}

fn only_keys(m: &Map<String, Value>, path: &str, allowed: &[&str]) -> Result<(), TrajectoryError> {
    for k in m.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(TrajectoryError::schema(join(path, k), "unknown field"));
        }
    }
    Ok(())
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn field<'a>(m: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, TrajectoryError> {
    m.get(key)
        .ok_or_else(|| TrajectoryError::schema(join(path, key), "missing field"))
}

fn number(v: &Value, path: &str) -> Result<f64, TrajectoryError> {
    match v.as_f64() {
        Some(x) if x.is_finite() => Ok(x),
        Some(_) => Err(TrajectoryError::NonFinite { path: path.into() }),
        None if v.is_null() => Err(TrajectoryError::NonFinite { path: path.into() }),
        None => Err(TrajectoryError::schema(path, "expected a number")),
    }
}

fn numbers(v: &Value, path: &str, len: Option<usize>) -> Result<Vec<f64>, TrajectoryError> {
    let arr = v
        .as_array()
        .ok_or_else(|| TrajectoryError::schema(path, "expected an array"))?;
    if let Some(n) = len {
        if arr.len() != n {
            return Err(TrajectoryError::schema(
                path,
                format!("expected {n} numbers, got {}", arr.len()),
            ));
        }
    }
    arr.iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{path}[{i}]")))
        .collect()
}

fn pose(v: &Value, path: &str) -> Result<RigidTransform, TrajectoryError> {
    let m = object(v, path)?;
    only_keys(m, path, &["xyz", "wxyz"])?;
    let xyz = numbers(field(m, path, "xyz")?, &join(path, "xyz"), Some(3))?;
    let wxyz_path = join(path, "wxyz");
    let q = numbers(field(m, path, "wxyz")?, &wxyz_path, Some(4))?;
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > QUAT_NORM_TOL {
        return Err(TrajectoryError::schema(
            wxyz_path,
            format!("quaternion norm {norm} is not 1"),
        ));
    }
    let record = crate::transform::PoseRecord {
        xyz: [xyz[0], xyz[1], xyz[2]],
        wxyz: [q[0], q[1], q[2], q[3]],
    };
    Ok(record.to_transform_exact(1e-12).expect("validated pose"))
}

pub fn trajectory_from_json(text: &str) -> Result<DemoTrajectory, TrajectoryError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        TrajectoryError::schema(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    let root = object(&doc, "")?;
    only_keys(root, "", &["layout_version", "dt", "object_ref", "lift_index", "frames"])?;
    let version = field(root, "", "layout_version")?
        .as_u64()
        .ok_or_else(|| TrajectoryError::schema("layout_version", "expected a non-negative integer"))?;
    let layout = u32::try_from(version)
        .ok()
        .and_then(HandLayout::from_version)
        .ok_or_else(|| TrajectoryError::schema("layout_version", format!("unsupported layout version {version}")))?;
    let dt = number(field(root, "", "dt")?, "dt")?;
    if dt <= 0.0 {
        return Err(TrajectoryError::schema("dt", "must be positive"));
    }
    let object_ref = field(root, "", "object_ref")?
        .as_str()
        .ok_or_else(|| TrajectoryError::schema("object_ref", "expected a string"))?
        .to_string();
    let lift_index = match root.get("lift_index") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| TrajectoryError::schema("lift_index", "expected a non-negative integer or null"))?
                as usize,
        ),
    };
    let raw_frames = field(root, "", "frames")?
        .as_array()
        .ok_or_else(|| TrajectoryError::schema("frames", "expected an array"))?;
    if raw_frames.is_empty() {
        return Err(TrajectoryError::schema("frames", "at least one frame is required"));
    }
    let mut frames = Vec::with_capacity(raw_frames.len());
    for (t, fv) in raw_frames.iter().enumerate() {
        let path = format!("frames[{t}]");
        let m = object(fv, &path)?;
        only_keys(m, &path, &["hand_keypoints", "wrist_pose", "object_pose"])?;
        let flat = numbers(
            field(m, &path, "hand_keypoints")?,
            &join(&path, "hand_keypoints"),
            Some(3 * layout.count),
        )?;
        let hand_keypoints = flat.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let wrist_pose = pose(field(m, &path, "wrist_pose")?, &join(&path, "wrist_pose"))?;
        let object_pose = pose(field(m, &path, "object_pose")?, &join(&path, "object_pose"))?;
        frames.push(DemoFrame {
            hand_keypoints,
            wrist_pose,
            object_pose,
        });
    }
    if let Some(l) = lift_index {
        if l >= frames.len() {
            return Err(TrajectoryError::schema(
                "lift_index",
                format!("{l} is outside {} frames", frames.len()),
            ));
        }
    }
    let traj = DemoTrajectory {
        frames,
        dt,
        lift_index,
        object_ref,
        layout,
    };
    traj.validate()?;
    Ok(traj)
}

fn read(path: &Path) -> Result<String, TrajectoryError> {
    std::fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), TrajectoryError> {
    std::fs::write(path, text).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_trajectory(path: &Path) -> Result<DemoTrajectory, TrajectoryError> {
    trajectory_from_json(&read(path)?)
}

pub fn save_trajectory(path: &Path, traj: &DemoTrajectory) -> Result<(), TrajectoryError> {
    write(path, &trajectory_to_json(traj))
}

pub fn object_model_to_json(model: &ObjectModel) -> String {
    let points: Vec<[f64; 3]> = model.points.iter().map(|p| [p.x, p.y, p.z]).collect();
    serde_json::to_string_pretty(&json!({
        "id": model.id,
        "scale": model.scale,
        "points": points,
    }))
    .expect("json values serialize")
}

pub fn object_model_from_json(text: &str) -> Result<ObjectModel, TrajectoryError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        TrajectoryError::schema(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    let root = object(&doc, "")?;
    only_keys(root, "", &["id", "scale", "points"])?;
    let id = field(root, "", "id")?
        .as_str()
        .ok_or_else(|| TrajectoryError::schema("id", "expected a string"))?;
    let scale = number(field(root, "", "scale")?, "scale")?;
    let raw = field(root, "", "points")?
        .as_array()
        .ok_or_else(|| TrajectoryError::schema("points", "expected an array"))?;
    let mut points = Vec::with_capacity(raw.len());
    for (i, p) in raw.iter().enumerate() {
        let v = numbers(p, &format!("points[{i}]"), Some(3))?;
        points.push(Vec3::new(v[0], v[1], v[2]));
    }
    ObjectModel::new(id, points, scale)
}

pub fn load_object_model(path: &Path) -> Result<ObjectModel, TrajectoryError> {
    object_model_from_json(&read(path)?)
}

pub fn save_object_model(path: &Path, model: &ObjectModel) -> Result<(), TrajectoryError> {
    write(path, &object_model_to_json(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{synth_demo, ObjectShape, SynthSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let d = synth_demo(&SynthSpec::default(), 5).unwrap();
        let back = trajectory_from_json(&trajectory_to_json(&d)).unwrap();
        assert_eq!(back, d);
    }

    fn edit(f: impl FnOnce(&mut Value)) -> String {
        let d = synth_demo(&SynthSpec::default(), 5).unwrap();
        let mut v: Value = serde_json::from_str(&trajectory_to_json(&d)).unwrap();
        f(&mut v);
        v.to_string()
    }

    fn err_path(text: &str) -> String {
        match trajectory_from_json(text) {
            Err(TrajectoryError::Schema { path, .. }) | Err(TrajectoryError::NonFinite { path }) => path,
            other => panic!("expected a path error, got {other:?}"),
        }
    }

    #[test]
    fn missing_object_pose_is_located() {
        let text = edit(|v| {
            v["frames"][0].as_object_mut().unwrap().remove("object_pose");
        });
        assert_eq!(err_path(&text), "frames[0].object_pose");
    }

    #[test]
    fn bad_quaternion_is_located() {
        let text = edit(|v| v["frames"][2]["wrist_pose"]["wxyz"] = json!([2.0, 0.0, 0.0, 0.0]));
        assert_eq!(err_path(&text), "frames[2].wrist_pose.wxyz");
    }

    #[test]
    fn null_number_is_non_finite() {
        let text = edit(|v| v["frames"][1]["hand_keypoints"][4] = Value::Null);
        assert_eq!(err_path(&text), "frames[1].hand_keypoints[4]");
    }

    #[test]
    fn unknown_and_wrong_length_fields() {
        let text = edit(|v| v["extra"] = json!(1));
        assert_eq!(err_path(&text), "extra");
        let text = edit(|v| v["frames"][0]["hand_keypoints"] = json!([0.0, 1.0]));
        assert_eq!(err_path(&text), "frames[0].hand_keypoints");
        let text = edit(|v| v["layout_version"] = json!(7));
        assert_eq!(err_path(&text), "layout_version");
    }

    #[test]
    fn object_model_round_trip() {
        let m = ObjectShape::Box { half_extents: [0.02, 0.03, 0.04] }.to_model("crate", 1.5, 120);
        let back = object_model_from_json(&object_model_to_json(&m)).unwrap();
        assert_eq!(back, m);
    }
}
