//! The four co-located volumes a dataset is made of.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::segy::{read_segy, SegyError};
use crate::volume::{Volume3D, VolumeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Seismic,
    VAvg,
    Twt,
    VInt,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Seismic, Role::VAvg, Role::Twt, Role::VInt];

    pub fn label(self) -> &'static str {
        match self {
            Role::Seismic => "seismic",
            Role::VAvg => "v_avg",
            Role::Twt => "twt",
            Role::VInt => "v_int_fwi",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Role::Seismic => "seismic.sgy",
            Role::VAvg => "v_avg.sgy",
            Role::Twt => "twt.sgy",
            Role::VInt => "v_int.sgy",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seismic" => Ok(Role::Seismic),
            "v_avg" => Ok(Role::VAvg),
            "twt" => Ok(Role::Twt),
            "v_int" | "v_int_fwi" => Ok(Role::VInt),
            other => Err(format!("unknown volume role '{other}'")),
        }
    }
}

/// Seismic image, average velocity, TWT grid and interval velocity on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSet {
    pub seismic: Volume3D,
    pub v_avg: Volume3D,
    pub twt: Volume3D,
    pub v_int: Volume3D,
}

impl VolumeSet {
    pub fn new(
        seismic: Volume3D,
        v_avg: Volume3D,
        twt: Volume3D,
        v_int: Volume3D,
    ) -> Result<Self, VolumeError> {
        let set = Self {
            seismic: seismic.with_label(Role::Seismic.label()),
            v_avg: v_avg.with_label(Role::VAvg.label()),
            twt: twt.with_label(Role::Twt.label()),
            v_int: v_int.with_label(Role::VInt.label()),
        };
        set.check_geometry()?;
        Ok(set)
    }

    /// Reads `seismic.sgy`, `v_avg.sgy`, `twt.sgy` and `v_int.sgy` from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, SegyError> {
        let dir = dir.as_ref();
        let read = |role: Role| read_segy(dir.join(role.file_name()));
        Ok(Self::new(
            read(Role::Seismic)?,
            read(Role::VAvg)?,
            read(Role::Twt)?,
            read(Role::VInt)?,
        )?)
    }

    pub fn check_geometry(&self) -> Result<(), VolumeError> {
        for role in [Role::VAvg, Role::Twt, Role::VInt] {
            self.seismic.ensure_same_geometry(self.get(role))?;
        }
        Ok(())
    }

    pub fn get(&self, role: Role) -> &Volume3D {
        match role {
            Role::Seismic => &self.seismic,
            Role::VAvg => &self.v_avg,
            Role::Twt => &self.twt,
            Role::VInt => &self.v_int,
        }
    }

    /// Applies `f` to every volume, keeping the role order.
    pub fn try_map<E>(&self, mut f: impl FnMut(Role, &Volume3D) -> Result<Volume3D, E>) -> Result<Self, E> {
        Ok(Self {
            seismic: f(Role::Seismic, &self.seismic)?,
            v_avg: f(Role::VAvg, &self.v_avg)?,
            twt: f(Role::Twt, &self.twt)?,
            v_int: f(Role::VInt, &self.v_int)?,
        })
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.seismic.dim()
    }
}
