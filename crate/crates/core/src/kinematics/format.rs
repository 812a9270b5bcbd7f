//! Chain description documents (TOML).

use serde::{Deserialize, Serialize};

use super::{ChainError, Joint, JointKind, Keypoint, KinematicChain};
use crate::transform::{PoseRecord, Vec3};

/// Grammar of the chain document, reproduced in the repository README.
pub const FORMAT_GRAMMAR: &str = r#"
[chain]                      # required
name = "<string>"            # required
wrist = "<keypoint id>"      # optional; arm/hand split for vector retargeting
fingertips = ["<id>", ...]   # optional; exactly 5 keypoint ids when present

[[link]]                     # one per link
name = "<string>"

[[joint]]                    # one per degree of freedom, in configuration order
name = "<string>"
kind = "revolute" | "prismatic"
parent = "<link name>"
child = "<link name>"
origin = { xyz = [x, y, z], wxyz = [w, x, y, z] }
axis = [x, y, z]             # unit length within 1e-9
limits = [lo, hi]            # lo <= hi, radians or meters

[[keypoint]]
id = "<string>"
link = "<link name>"
offset = { xyz = [x, y, z], wxyz = [w, x, y, z] }
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDocument {
    pub chain: ChainHeader,
    #[serde(default)]
    pub link: Vec<LinkRecord>,
    #[serde(default)]
    pub joint: Vec<JointRecord>,
    #[serde(default)]
    pub keypoint: Vec<KeypointRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainHeader {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrist: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fingertips: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointRecord {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    pub origin: PoseRecord,
    pub axis: [f64; 3],
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointRecord {
    pub id: String,
    pub link: String,
    pub offset: PoseRecord,
}

impl ChainDocument {
    pub fn parse(text: &str) -> Result<Self, ChainError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_column(text, s.start))
                .unwrap_or((0, 0));
            ChainError::Syntax {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn build(&self) -> Result<KinematicChain, ChainError> {
        let links = self.link.iter().map(|l| l.name.clone()).collect();
        let mut joints = Vec::with_capacity(self.joint.len());
        for j in &self.joint {
            let origin = j.origin.to_transform_exact(1e-9).ok_or_else(|| {
                ChainError::semantic(format!("joint `{}`", j.name), "invalid origin pose")
            })?;
            joints.push(Joint {
                name: j.name.clone(),
                kind: j.kind,
                parent_link: j.parent.clone(),
                child_link: j.child.clone(),
                origin,
                axis: Vec3::from(j.axis),
                limits: (j.limits[0], j.limits[1]),
            });
        }
        let mut keypoints = Vec::with_capacity(self.keypoint.len());
        for k in &self.keypoint {
            let offset = k.offset.to_transform_exact(1e-9).ok_or_else(|| {
                ChainError::semantic(format!("keypoint `{}`", k.id), "invalid offset pose")
            })?;
            keypoints.push(Keypoint {
                id: k.id.clone(),
                link: k.link.clone(),
                offset,
            });
        }
        KinematicChain::new(
            self.chain.name.clone(),
            links,
            joints,
            keypoints,
            self.chain.fingertips.clone(),
            self.chain.wrist.clone(),
        )
    }

    pub fn from_chain(chain: &KinematicChain) -> Self {
        ChainDocument {
            chain: ChainHeader {
                name: chain.name().to_string(),
                wrist: chain.wrist_id().map(str::to_string),
                fingertips: chain.fingertip_ids().to_vec(),
            },
            link: chain
                .links()
                .iter()
                .map(|n| LinkRecord { name: n.clone() })
                .collect(),
            joint: chain
                .joints()
                .iter()
                .map(|j| JointRecord {
                    name: j.name.clone(),
                    kind: j.kind,
                    parent: j.parent_link.clone(),
                    child: j.child_link.clone(),
                    origin: PoseRecord::from(&j.origin),
                    axis: [j.axis.x, j.axis.y, j.axis.z],
                    limits: [j.limits.0, j.limits.1],
                })
                .collect(),
            keypoint: chain
                .keypoints()
                .iter()
                .map(|k| KeypointRecord {
                    id: k.id.clone(),
                    link: k.link.clone(),
                    offset: PoseRecord::from(&k.offset),
                })
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("chain documents always serialize")
    }
}

impl KinematicChain {
    pub fn parse(text: &str) -> Result<Self, ChainError> {
        ChainDocument::parse(text)?.build()
    }

    pub fn to_document(&self) -> String {
        ChainDocument::from_chain(self).to_toml()
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}
