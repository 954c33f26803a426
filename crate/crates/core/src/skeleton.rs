//! The 17-joint skeleton, its six body-part groups, and left/right mirror pairs.

use std::fmt;

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JointId {
    Hip,
    RHip,
    RKnee,
    RFoot,
    LHip,
    LKnee,
    LFoot,
    Spine,
    Thorax,
    Nose,
    Head,
    LShoulder,
    LElbow,
    LWrist,
    RShoulder,
    RElbow,
    RWrist,
}

impl JointId {
    /// All joints in index order.
    pub const ALL: [JointId; NUM_JOINTS] = [
        JointId::Hip,
        JointId::RHip,
        JointId::RKnee,
        JointId::RFoot,
        JointId::LHip,
        JointId::LKnee,
        JointId::LFoot,
        JointId::Spine,
        JointId::Thorax,
        JointId::Nose,
        JointId::Head,
        JointId::LShoulder,
        JointId::LElbow,
        JointId::LWrist,
        JointId::RShoulder,
        JointId::RElbow,
        JointId::RWrist,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointId::Hip => "Hip",
            JointId::RHip => "RHip",
            JointId::RKnee => "RKnee",
            JointId::RFoot => "RFoot",
            JointId::LHip => "LHip",
            JointId::LKnee => "LKnee",
            JointId::LFoot => "LFoot",
            JointId::Spine => "Spine",
            JointId::Thorax => "Thorax",
            JointId::Nose => "Nose",
            JointId::Head => "Head",
            JointId::LShoulder => "LShoulder",
            JointId::LElbow => "LElbow",
            JointId::LWrist => "LWrist",
            JointId::RShoulder => "RShoulder",
            JointId::RElbow => "RElbow",
            JointId::RWrist => "RWrist",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|j| j.name() == name)
    }

    /// Kinematic parent; `None` for the root.
    pub fn parent(self) -> Option<Self> {
        use JointId::*;
        match self {
            Hip => None,
            RHip | LHip | Spine => Some(Hip),
            RKnee => Some(RHip),
            RFoot => Some(RKnee),
            LKnee => Some(LHip),
            LFoot => Some(LKnee),
            Thorax => Some(Spine),
            Nose | LShoulder | RShoulder => Some(Thorax),
            Head => Some(Nose),
            LElbow => Some(LShoulder),
            LWrist => Some(LElbow),
            RElbow => Some(RShoulder),
            RWrist => Some(RElbow),
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BodyPart {
    Head,
    Torso,
    LeftHand,
    RightHand,
    LeftLeg,
    RightLeg,
}

impl BodyPart {
    pub fn name(self) -> &'static str {
        match self {
            BodyPart::Head => "Head",
            BodyPart::Torso => "Torso",
            BodyPart::LeftHand => "LeftHand",
            BodyPart::RightHand => "RightHand",
            BodyPart::LeftLeg => "LeftLeg",
            BodyPart::RightLeg => "RightLeg",
        }
    }
}

/// The ordered joint list a dataset or checkpoint was produced with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    joints: Vec<JointId>,
}

impl Skeleton {
    pub fn joints(&self) -> &[JointId] {
        &self.joints
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.joints.iter().map(|j| j.name().to_string()).collect()
    }

    /// Parses a serialized name list; only the canonical 17-joint layout is accepted.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.len() != NUM_JOINTS {
            return Err(Error::Format(format!("skeleton must have {NUM_JOINTS} joints, got {}", names.len())));
        }
        let mut joints = Vec::with_capacity(NUM_JOINTS);
        for (i, name) in names.iter().enumerate() {
            let name = name.as_ref();
            let joint =
                JointId::from_name(name).ok_or_else(|| Error::Format(format!("unknown joint name {name:?}")))?;
            if joint.index() != i {
                return Err(Error::Format(format!(
                    "joint {name} at position {i}, expected position {}",
                    joint.index()
                )));
            }
            joints.push(joint);
        }
        Ok(Self { joints })
    }

    /// (child, parent) index pairs for every non-root joint.
    pub fn bones(&self) -> Vec<(usize, usize)> {
        self.joints.iter().filter_map(|j| j.parent().map(|p| (j.index(), p.index()))).collect()
    }
}

impl Default for Skeleton {
    fn default() -> Self {
        Self { joints: JointId::ALL.to_vec() }
    }
}

/// Six disjoint joint groups covering the skeleton. Group and within-group
/// order fix the body-part token layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BodyPartPartition {
    groups: Vec<(BodyPart, Vec<JointId>)>,
}

impl BodyPartPartition {
    pub fn new(groups: Vec<(BodyPart, Vec<JointId>)>) -> Result<Self> {
        let partition = Self { groups };
        partition.validate()?;
        Ok(partition)
    }

    /// Checks the groups are pairwise disjoint and cover all joints.
    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; NUM_JOINTS];
        for (part, joints) in &self.groups {
            if joints.is_empty() {
                return Err(Error::Config(format!("body part {} is empty", part.name())));
            }
            for j in joints {
                if std::mem::replace(&mut seen[j.index()], true) {
                    return Err(Error::Config(format!("joint {j} appears in more than one body part")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("joint {} is not covered by any body part", JointId::ALL[missing])));
        }
        Ok(())
    }

    pub fn groups(&self) -> &[(BodyPart, Vec<JointId>)] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|(_, j)| j.len()).collect()
    }

    pub fn partition_of(&self, joint: JointId) -> Option<BodyPart> {
        self.groups.iter().find(|(_, joints)| joints.contains(&joint)).map(|(part, _)| *part)
    }

    /// Joint indices of each group, in group order.
    pub fn group_indices(&self) -> Vec<Vec<usize>> {
        self.groups.iter().map(|(_, joints)| joints.iter().map(|j| j.index()).collect()).collect()
    }

    /// Per-part token width `J^k · d`.
    pub fn token_widths(&self, d: usize) -> Vec<usize> {
        self.group_sizes().into_iter().map(|n| n * d).collect()
    }
}

impl Default for BodyPartPartition {
    fn default() -> Self {
        use JointId::*;
        Self {
            groups: vec![
                (BodyPart::Head, vec![Nose, Head]),
                (BodyPart::Torso, vec![Hip, Spine, Thorax]),
                (BodyPart::LeftHand, vec![LShoulder, LElbow, LWrist]),
                (BodyPart::RightHand, vec![RShoulder, RElbow, RWrist]),
                (BodyPart::LeftLeg, vec![LHip, LKnee, LFoot]),
                (BodyPart::RightLeg, vec![RHip, RKnee, RFoot]),
            ],
        }
    }
}

pub fn default_skeleton() -> (Skeleton, BodyPartPartition) {
    (Skeleton::default(), BodyPartPartition::default())
}

/// Left/right joint pairs swapped by a horizontal flip.
pub fn mirror_pairs() -> Vec<(JointId, JointId)> {
    // Pair every L-prefixed joint with its R-prefixed twin.
    JointId::ALL
        .iter()
        .filter_map(|j| {
            let rest = j.name().strip_prefix('L')?;
            let twin = JointId::from_name(&format!("R{rest}"))?;
            Some((*j, twin))
        })
        .collect()
}

/// Joint index permutation applied by a horizontal flip; an involution.
pub fn mirror_permutation() -> [usize; NUM_JOINTS] {
    let mut perm: [usize; NUM_JOINTS] = std::array::from_fn(|i| i);
    for (l, r) in mirror_pairs() {
        perm.swap(l.index(), r.index());
    }
    perm
}
