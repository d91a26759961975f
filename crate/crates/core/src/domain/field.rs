use std::io::{Read, Write};
use std::sync::Arc;

use super::mesh::{Mesh, Resolution, SphereDesign};
use super::{BoxMask, DomainSpec, Point, Shape};
use crate::error::{invalid, Error, Result};

/// Nodal values on a mesh.
#[derive(Debug, Clone)]
pub struct Field {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return invalid(format!("field has {} values for {} nodes", values.len(), mesh.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("field values must be finite");
        }
        Ok(Field { mesh, values })
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Field { mesh: mesh.clone(), values: vec![0.0; mesh.len()] }
    }

    pub fn constant(mesh: &Arc<Mesh>, c: f64) -> Self {
        Field { mesh: mesh.clone(), values: vec![c; mesh.len()] }
    }

    /// Samples `f` at node positions (radial nodes sit on the first axis).
    pub fn from_fn(mesh: &Arc<Mesh>, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..mesh.len()).map(|j| f(&mesh.position(j))).collect();
        Field { mesh: mesh.clone(), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_mesh(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    pub(crate) fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.same_mesh(other)
            || self.values.len() == other.values.len() && self.mesh.kind_name() == other.mesh.kind_name()
        {
            Ok(())
        } else {
            invalid("fields live on incompatible meshes")
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { mesh: self.mesh.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn with_values(&self, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), self.values.len());
        Field { mesh: self.mesh.clone(), values }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &Field) -> Field {
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Index and value of the largest entry.
    pub fn argmax(&self) -> (usize, f64) {
        self.values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
    }

    /// Sets every non-interior node to zero.
    pub fn zero_boundary(&self) -> Field {
        let interior = self.mesh.interior();
        self.with_values(self.values.iter().zip(interior).map(|(v, &i)| if i { *v } else { 0.0 }).collect())
    }

    /// Resamples a radial field onto another radial mesh of the same domain by
    /// linear interpolation in r.
    pub fn resample(&self, target: &Arc<Mesh>) -> Result<Field> {
        match (&*self.mesh, &**target) {
            (Mesh::Radial(src), Mesh::Radial(dst)) if src.domain == dst.domain => {
                let values = dst.r.iter().map(|&s| src.interpolate(&self.values, s)).collect();
                Ok(Field { mesh: target.clone(), values })
            }
            _ => Err(Error::Unsupported { op: "resample", mesh: self.mesh.kind_name() }),
        }
    }

    /// Interprets the (clamped non-negative) values as a density and returns
    /// a normalized point-mass representation. Radial fields are expanded
    /// over a spherical design after merging nodes into at most
    /// `max_shells` radial bins.
    pub fn to_density(&self) -> Result<Density> {
        self.to_density_with(400, &SphereDesign::new(3, 6, 6))
    }

    pub fn to_density_with(&self, max_shells: usize, design: &SphereDesign) -> Result<Density> {
        let w = self.mesh.weights();
        let mass: Vec<f64> = self.values.iter().zip(w).map(|(v, w)| v.max(0.0) * w).collect();
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return invalid("density has no positive mass");
        }
        match &*self.mesh {
            Mesh::Radial(m) => {
                let n = m.r.len();
                let per_bin = n.div_ceil(max_shells.max(1));
                let mut points = Vec::new();
                let mut masses = Vec::new();
                for chunk in (0..n).collect::<Vec<_>>().chunks(per_bin) {
                    let bin_mass: f64 = chunk.iter().map(|&j| mass[j]).sum();
                    if bin_mass <= 0.0 {
                        continue;
                    }
                    let radius = chunk.iter().map(|&j| mass[j] * m.r[j]).sum::<f64>() / bin_mass;
                    for d in &design.directions {
                        points.push(d.map(|c| c * radius));
                        masses.push(bin_mass / total / design.len() as f64);
                    }
                }
                Ok(Density { points, mass: masses })
            }
            _ => {
                let mut points = Vec::new();
                let mut masses = Vec::new();
                for (j, m) in mass.iter().enumerate() {
                    if *m > 0.0 {
                        points.push(self.mesh.position(j));
                        masses.push(m / total);
                    }
                }
                Ok(Density { points, mass: masses })
            }
        }
    }

    pub fn write_binary(&self, out: &mut impl Write) -> Result<()> {
        let res = self.mesh.resolution().ok_or(Error::Unsupported { op: "binary serialization", mesh: "cloud" })?;
        let io = |e: std::io::Error| Error::Format(e.to_string());
        let d = self.mesh.domain();
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        let (mode, n, grading) = match res {
            Resolution::Radial { n, grading } => (0u32, n as u64, grading),
            Resolution::Grid { n } => (1u32, n as u64, 0.0),
        };
        buf.extend_from_slice(&mode.to_le_bytes());
        let (kind, params, mask_kind, mask_params) = encode_domain(d);
        buf.extend_from_slice(&kind.to_le_bytes());
        for p in params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        buf.extend_from_slice(&mask_kind.to_le_bytes());
        for p in mask_params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        buf.extend_from_slice(&d.chi.to_le_bytes());
        buf.extend_from_slice(&d.eta.to_le_bytes());
        buf.extend_from_slice(&n.to_le_bytes());
        buf.extend_from_slice(&grading.to_le_bytes());
        buf.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf).map_err(io)
    }

    pub fn read_binary(input: &mut impl Read) -> Result<Field> {
        let mut buf = Vec::new();
        input.read_to_end(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mode = cur.u32()?;
        let kind = cur.u32()?;
        let params = [cur.f64()?, cur.f64()?, cur.f64()?, cur.f64()?];
        let mask_kind = cur.u32()?;
        let mask_params = [cur.f64()?, cur.f64()?];
        let chi = cur.i64()?;
        let eta = cur.f64()?;
        let n = cur.u64()? as usize;
        let grading = cur.f64()?;
        let count = cur.u64()? as usize;
        let domain = decode_domain(kind, params, mask_kind, mask_params, chi, eta)?;
        let res = match mode {
            0 => Resolution::Radial { n, grading },
            1 => Resolution::Grid { n },
            m => return Err(Error::Format(format!("unknown mesh mode {m}"))),
        };
        let mesh = Mesh::build(&domain, res)?;
        if mesh.len() != count {
            return Err(Error::Format(format!("header says {count} values, mesh has {}", mesh.len())));
        }
        let values = (0..count).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        if cur.pos != buf.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Field::new(mesh, values)
    }

    /// CSV with node coordinates and the value; radial fields write `r,value`.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        let mut s = String::new();
        match &*self.mesh {
            Mesh::Radial(m) => {
                s.push_str("r,value\n");
                for (r, v) in m.r.iter().zip(&self.values) {
                    s.push_str(&format!("{r:e},{v:e}\n"));
                }
            }
            mesh => {
                s.push_str("x0,x1,x2,x3,value\n");
                for (j, v) in self.values.iter().enumerate() {
                    let p = mesh.position(j);
                    s.push_str(&format!("{:e},{:e},{:e},{:e},{v:e}\n", p[0], p[1], p[2], p[3]));
                }
            }
        }
        out.write_all(s.as_bytes()).map_err(io)
    }
}

const MAGIC: &[u8; 4] = b"MFLD";

fn encode_domain(d: &DomainSpec) -> (u32, [f64; 4], u32, [f64; 2]) {
    match d.shape {
        Shape::Ball { radius } => (0, [radius, 0.0, 0.0, 0.0], 0, [0.0; 2]),
        Shape::Shell { inner, outer } => (1, [inner, outer, 0.0, 0.0], 0, [0.0; 2]),
        Shape::Box4d { extent, mask } => {
            let (mk, mp) = match mask {
                BoxMask::None => (0, [0.0; 2]),
                BoxMask::Ball { radius } => (1, [radius, 0.0]),
                BoxMask::Shell { inner, outer } => (2, [inner, outer]),
            };
            (2, extent, mk, mp)
        }
    }
}

fn decode_domain(kind: u32, p: [f64; 4], mask_kind: u32, mp: [f64; 2], chi: i64, eta: f64) -> Result<DomainSpec> {
    let d = match kind {
        0 => DomainSpec::ball(p[0])?,
        1 => DomainSpec::shell(p[0], p[1])?,
        2 => {
            let mask = match mask_kind {
                0 => BoxMask::None,
                1 => BoxMask::Ball { radius: mp[0] },
                2 => BoxMask::Shell { inner: mp[0], outer: mp[1] },
                m => return Err(Error::Format(format!("unknown mask kind {m}"))),
            };
            DomainSpec::box4d(p, mask, chi)?
        }
        k => return Err(Error::Format(format!("unknown domain kind {k}"))),
    };
    Ok(DomainSpec { chi, eta, ..d })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated field file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Normalized point masses.
#[derive(Debug, Clone)]
pub struct Density {
    pub points: Vec<Point>,
    pub mass: Vec<f64>,
}

impl Density {
    pub fn new(points: Vec<Point>, mass: Vec<f64>) -> Result<Self> {
        if points.len() != mass.len() {
            return invalid("points and masses differ in length");
        }
        if mass.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return invalid("masses must be finite and non-negative");
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return invalid("density has no positive mass");
        }
        Ok(Density { points, mass: mass.into_iter().map(|m| m / total).collect() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mass within distance `r` of `center`.
    pub fn mass_within(&self, center: &Point, r: f64) -> f64 {
        self.points.iter().zip(&self.mass).filter(|(p, _)| super::dist(p, center) < r).map(|(_, m)| m).sum()
    }
}
