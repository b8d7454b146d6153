//! Binary container for solved bases.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field            | type                                   |
//! |------------------|----------------------------------------|
//! | magic            | `b"BTBASIS\0"`                         |
//! | version          | u32 (= 1)                              |
//! | mesh hash        | 32 bytes (SHA-256 of the mesh)         |
//! | panel count      | u64                                    |
//! | electrode count  | u32                                    |
//! | electrode names  | per electrode: u16 length + UTF-8      |
//! | tolerance        | f64                                    |
//! | method           | u8 (0 dense, 1 GMRES)                  |
//! | residual         | f64                                    |
//! | condition        | f64                                    |
//! | iterations       | u64                                    |
//! | near, far factor | f64, f64                               |
//! | charges          | electrodes x panels f64, electrode-major |
//!
//! Nothing follows the charge block.

use std::sync::Arc;

use super::{BasisSet, Diagnostics, Geometry, SolveMethod};
use crate::error::{Error, Result};
use crate::geometry::{ElectrodeId, ElectrodeMesh};

pub const MAGIC: &[u8; 8] = b"BTBASIS\0";
pub const VERSION: u32 = 1;

/// Decoded container contents, independent of any mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct RawBasis {
    pub mesh_hash: [u8; 32],
    pub panels: usize,
    pub electrodes: Vec<ElectrodeId>,
    pub tolerance: f64,
    pub diagnostics: Diagnostics,
    pub near_factor: f64,
    pub far_factor: f64,
    pub charges: Vec<Vec<f64>>,
}

pub fn encode(basis: &BasisSet) -> Vec<u8> {
    let n = basis.mesh().len();
    let ne = basis.electrodes().len();
    let mut out = Vec::with_capacity(128 + ne * (16 + 8 * n));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&basis.mesh_hash());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(ne as u32).to_le_bytes());
    for e in basis.electrodes() {
        let name = e.to_string();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    let d = &basis.diagnostics;
    out.extend_from_slice(&basis.tolerance().to_le_bytes());
    out.push(match d.method {
        SolveMethod::Dense => 0,
        SolveMethod::Gmres => 1,
    });
    out.extend_from_slice(&d.residual.to_le_bytes());
    out.extend_from_slice(&d.condition.to_le_bytes());
    out.extend_from_slice(&(d.iterations as u64).to_le_bytes());
    out.extend_from_slice(&basis.geometry().near_factor.to_le_bytes());
    out.extend_from_slice(&basis.geometry().far_factor.to_le_bytes());
    for col in basis.all_charges() {
        for v in col {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Format(format!("truncated container while reading {what}")))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses a container without reference to a mesh.
pub fn decode(bytes: &[u8]) -> Result<RawBasis> {
    let mut r = Reader { data: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format("not a basis container (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let mesh_hash: [u8; 32] = r.take(32, "mesh hash")?.try_into().unwrap();
    let panels = r.u64("panel count")?;
    let ne = r.u32("electrode count")? as usize;
    // every electrode needs at least a length prefix
    if ne > bytes.len() / 2 {
        return Err(Error::Format(format!("electrode count {ne} exceeds container size")));
    }
    let mut electrodes = Vec::with_capacity(ne);
    for _ in 0..ne {
        let len = r.u16("electrode name length")? as usize;
        let raw = r.take(len, "electrode name")?;
        let name = std::str::from_utf8(raw).map_err(|_| Error::Format("electrode name is not UTF-8".into()))?;
        let id: ElectrodeId = name
            .parse()
            .map_err(|_| Error::Format(format!("unknown electrode `{name}` in container")))?;
        if electrodes.contains(&id) {
            return Err(Error::Format(format!("electrode `{name}` listed twice")));
        }
        electrodes.push(id);
    }
    let tolerance = r.f64("tolerance")?;
    let method = match r.u8("method")? {
        0 => SolveMethod::Dense,
        1 => SolveMethod::Gmres,
        m => return Err(Error::Format(format!("unknown solve method tag {m}"))),
    };
    let residual = r.f64("residual")?;
    let condition = r.f64("condition")?;
    let iterations = r.u64("iterations")?;
    let near_factor = r.f64("near factor")?;
    let far_factor = r.f64("far factor")?;
    if !(near_factor > 0.0 && far_factor >= near_factor && far_factor.is_finite()) {
        return Err(Error::Format("invalid kernel distance factors".into()));
    }
    let remaining = bytes.len() - r.pos;
    let expected = (panels as u128) * (ne as u128) * 8;
    if expected != remaining as u128 {
        return Err(Error::Format(format!(
            "charge block holds {remaining} bytes, expected {expected}"
        )));
    }
    let panels = panels as usize;
    let mut charges = Vec::with_capacity(ne);
    for _ in 0..ne {
        let raw = r.take(panels * 8, "charges")?;
        let col: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite charge density".into()));
        }
        charges.push(col);
    }
    Ok(RawBasis {
        mesh_hash,
        panels,
        electrodes,
        tolerance,
        diagnostics: Diagnostics {
            method,
            panels,
            residual,
            condition,
            iterations: iterations as usize,
        },
        near_factor,
        far_factor,
        charges,
    })
}

/// Decodes a container and binds it to `mesh`, which must hash identically.
pub fn load(bytes: &[u8], mesh: Arc<ElectrodeMesh>) -> Result<BasisSet> {
    let raw = decode(bytes)?;
    if raw.mesh_hash != mesh.content_hash() {
        return Err(Error::Format("container was solved on a different mesh".into()));
    }
    if raw.electrodes != mesh.electrodes() || raw.panels != mesh.len() {
        return Err(Error::Format("container electrode table does not match the mesh".into()));
    }
    let geometry = Arc::new(Geometry::new(&mesh, raw.near_factor, raw.far_factor));
    BasisSet::from_parts(mesh, geometry, raw.charges, raw.tolerance, raw.diagnostics)
}

/// Writes `basis` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
pub fn save_atomic(basis: &BasisSet, path: &std::path::Path) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("basis"),
        std::process::id()
    ));
    std::fs::write(&tmp, encode(basis))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
