//! Deterministic point samplers for the benchmark domains, structured test
//! meshes and point-set CSV I/O.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contact::ContactSite;
use crate::error::{Error, Result};

/// Boundary condition class of a boundary point. Numbered tags follow the
/// edge numbering of each benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    Symmetry,
    Dbc(u8),
    Nbc(u8),
    Contact,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Symmetry => write!(f, "SYMMETRY"),
            Tag::Dbc(i) => write!(f, "DBC_{i}"),
            Tag::Nbc(i) => write!(f, "NBC_{i}"),
            Tag::Contact => write!(f, "CONTACT"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let numbered = |rest: &str| {
            rest.parse::<u8>()
                .map_err(|_| Error::PointFile(format!("unknown tag '{s}'")))
        };
        match s {
            "SYMMETRY" => Ok(Tag::Symmetry),
            "CONTACT" => Ok(Tag::Contact),
            _ => {
                if let Some(rest) = s.strip_prefix("DBC_") {
                    Ok(Tag::Dbc(numbered(rest)?))
                } else if let Some(rest) = s.strip_prefix("NBC_") {
                    Ok(Tag::Nbc(numbered(rest)?))
                } else {
                    Err(Error::PointFile(format!("unknown tag '{s}'")))
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub position: [f64; 2],
    pub tag: Tag,
    /// Outward unit normal.
    pub normal: [f64; 2],
    /// Normal rotated by +90 degrees.
    pub tangent: [f64; 2],
}

impl BoundaryPoint {
    pub fn new(position: [f64; 2], tag: Tag, normal: [f64; 2]) -> Self {
        BoundaryPoint {
            position,
            tag,
            normal,
            tangent: rotate(normal),
        }
    }
}

fn rotate(n: [f64; 2]) -> [f64; 2] {
    [-n[1], n[0]]
}

/// Interior collocation points, tagged boundary points and test points, all
/// in reference coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSet {
    pub interior: Vec<[f64; 2]>,
    pub boundary: Vec<BoundaryPoint>,
    pub test: Vec<[f64; 2]>,
}

impl PointSet {
    pub fn with_tag(&self, tag: Tag) -> impl Iterator<Item = &BoundaryPoint> {
        self.boundary.iter().filter(move |b| b.tag == tag)
    }

    pub fn count(&self, tag: Tag) -> usize {
        self.with_tag(tag).count()
    }

    pub fn contact_sites(&self) -> Vec<ContactSite> {
        self.with_tag(Tag::Contact)
            .map(|b| ContactSite {
                reference: b.position,
                normal: b.normal,
                tangent: b.tangent,
            })
            .collect()
    }

    /// Training point count (interior plus boundary).
    pub fn training_len(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }
}

/// Requested interior and boundary point counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Counts {
    pub interior: usize,
    pub boundary: usize,
}

impl Counts {
    pub const fn new(interior: usize, boundary: usize) -> Self {
        Counts { interior, boundary }
    }
}

/// Jittered structured grid over `bbox = [x0, x1, y0, y1]`, clipped by
/// `inside`, with the spacing tuned so the count is as close to `target`
/// as bisection finds.
fn jittered_grid(
    bbox: [f64; 4],
    target: usize,
    seed: u64,
    inside: &dyn Fn(f64, f64) -> bool,
) -> Vec<[f64; 2]> {
    if target == 0 {
        return Vec::new();
    }
    let [x0, x1, y0, y1] = bbox;
    let generate = |h: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nx = ((x1 - x0) / h).ceil() as usize;
        let ny = ((y1 - y0) / h).ceil() as usize;
        let mut pts = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let jx: f64 = rng.random_range(-0.35..0.35);
                let jy: f64 = rng.random_range(-0.35..0.35);
                let x = x0 + (i as f64 + 0.5 + jx) * h;
                let y = y0 + (j as f64 + 0.5 + jy) * h;
                if x > x0 && x < x1 && y > y0 && y < y1 && inside(x, y) {
                    pts.push([x, y]);
                }
            }
        }
        pts
    };
    let area = (x1 - x0) * (y1 - y0);
    let mut lo = (area / (16.0 * target as f64)).sqrt();
    let mut hi = (16.0 * area / target as f64).sqrt();
    let mut best = generate((area / target as f64).sqrt());
    for _ in 0..48 {
        let h = 0.5 * (lo + hi);
        let pts = generate(h);
        if pts.len().abs_diff(target) < best.len().abs_diff(target) {
            best = pts.clone();
        }
        if pts.len() == target {
            break;
        }
        if pts.len() > target {
            lo = h;
        } else {
            hi = h;
        }
    }
    best
}

/// One boundary segment parametrized by `t in [0, 1]`.
struct Edge<'a> {
    tag: Tag,
    length: f64,
    /// Position and outward normal at `t`.
    at: Box<dyn Fn(f64) -> ([f64; 2], [f64; 2]) + 'a>,
}

/// Splits `total` points over the edges proportionally to length (largest
/// remainder), then places them at equal arc-length midpoints.
fn sample_edges(edges: &[Edge<'_>], total: usize) -> Vec<BoundaryPoint> {
    let counts = apportion(&edges.iter().map(|e| e.length).collect::<Vec<_>>(), total);
    let mut out = Vec::with_capacity(total);
    for (e, &n) in edges.iter().zip(&counts) {
        out.extend(edge_points(e, n));
    }
    out
}

fn edge_points(e: &Edge<'_>, n: usize) -> Vec<BoundaryPoint> {
    (0..n)
        .map(|k| {
            let (p, normal) = (e.at)((k as f64 + 0.5) / n as f64);
            BoundaryPoint::new(p, e.tag, normal)
        })
        .collect()
}

fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .partial_cmp(&(exact[a] - exact[a].floor()))
            .expect("finite weights")
            .then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().cycle().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Quarter annulus `R_i <= r <= R_o`, `x, y >= 0`. Edges: `x = 0` and
/// `y = 0` are symmetry planes, the outer arc is `NBC_2`, the inner
/// (pressurized) arc is `NBC_4`.
pub fn sample_quarter_annulus(r_i: f64, r_o: f64, counts: Counts, seed: u64) -> Result<PointSet> {
    if !(r_i > 0.0 && r_o > r_i && r_o.is_finite()) {
        return Err(Error::InvalidGeometry(format!(
            "need 0 < R_i < R_o, got R_i = {r_i}, R_o = {r_o}"
        )));
    }
    let interior = jittered_grid([0.0, r_o, 0.0, r_o], counts.interior, seed, &|x, y| {
        let r = x.hypot(y);
        r > r_i && r < r_o
    });
    let width = r_o - r_i;
    let edges = [
        Edge {
            tag: Tag::Symmetry,
            length: width,
            at: Box::new(move |t| ([0.0, r_i + t * width], [-1.0, 0.0])),
        },
        Edge {
            tag: Tag::Symmetry,
            length: width,
            at: Box::new(move |t| ([r_i + t * width, 0.0], [0.0, -1.0])),
        },
        Edge {
            tag: Tag::Nbc(2),
            length: FRAC_PI_2 * r_o,
            at: Box::new(move |t| {
                let (s, c) = (t * FRAC_PI_2).sin_cos();
                ([r_o * c, r_o * s], [c, s])
            }),
        },
        Edge {
            tag: Tag::Nbc(4),
            length: FRAC_PI_2 * r_i,
            at: Box::new(move |t| {
                let (s, c) = (t * FRAC_PI_2).sin_cos();
                ([r_i * c, r_i * s], [-c, -s])
            }),
        },
    ];
    Ok(PointSet {
        interior,
        boundary: sample_edges(&edges, counts.boundary),
        test: lame_test_mesh(r_i, r_o).nodes,
    })
}

/// Square `[0, l]^2`. Edges: left symmetry, top `NBC_2`, right `NBC_3`,
/// bottom `CONTACT`.
pub fn sample_unit_square(l: f64, counts: Counts, seed: u64) -> Result<PointSet> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidGeometry(format!("edge length must be > 0, got {l}")));
    }
    let interior = jittered_grid([0.0, l, 0.0, l], counts.interior, seed, &|_, _| true);
    let edges = [
        Edge {
            tag: Tag::Symmetry,
            length: l,
            at: Box::new(move |t| ([0.0, t * l], [-1.0, 0.0])),
        },
        Edge {
            tag: Tag::Nbc(2),
            length: l,
            at: Box::new(move |t| ([t * l, l], [0.0, 1.0])),
        },
        Edge {
            tag: Tag::Nbc(3),
            length: l,
            at: Box::new(move |t| ([l, t * l], [1.0, 0.0])),
        },
        Edge {
            tag: Tag::Contact,
            length: l,
            at: Box::new(move |t| ([t * l, 0.0], [0.0, -1.0])),
        },
    ];
    Ok(PointSet {
        interior,
        boundary: sample_edges(&edges, counts.boundary),
        test: StructuredMesh::rectangle([0.0, l, 0.0, l], 109, 109).nodes,
    })
}

/// Sampling options for the half-cylinder.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfCylinderOptions {
    /// Model only `x >= 0` with a symmetry edge at `x = 0`.
    pub symmetric: bool,
    /// Share of boundary points placed on the potential contact arc; `None`
    /// distributes by arc length.
    pub contact_share: Option<f64>,
    /// Additional interior points in `[x0, x1, y0, y1]` (mirrored in `x`
    /// for the full half-disk).
    pub refine: Option<(usize, [f64; 4])>,
    /// Radial and angular node counts of the test mesh.
    pub test_mesh: (usize, usize),
}

impl Default for HalfCylinderOptions {
    fn default() -> Self {
        HalfCylinderOptions {
            symmetric: true,
            contact_share: None,
            refine: None,
            test_mesh: (81, 81),
        }
    }
}

/// Half-cylinder of radius `R` lying on a rigid surface: flat top at
/// `y = 0`, centre at the origin, lowest point at `(0, -R)`. Edges: `x = 0`
/// symmetry (symmetric model only), top `NBC_2`, free arc `NBC_3`,
/// potential contact arc `CONTACT` within `alpha` of the lowest point.
pub fn sample_half_cylinder(
    radius: f64,
    alpha_deg: f64,
    counts: Counts,
    seed: u64,
    options: &HalfCylinderOptions,
) -> Result<PointSet> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidGeometry(format!("radius must be > 0, got {radius}")));
    }
    if !(alpha_deg > 0.0 && alpha_deg < 90.0) {
        return Err(Error::InvalidGeometry(format!(
            "contact half-angle must be in (0, 90) degrees, got {alpha_deg}"
        )));
    }
    let r = radius;
    let alpha = alpha_deg.to_radians();
    let xmin = if options.symmetric { 0.0 } else { -r };
    let inside = |x: f64, y: f64| x.hypot(y) < r && x > xmin && y < 0.0;
    let mut interior = jittered_grid([xmin, r, -r, 0.0], counts.interior, seed, &inside);
    if let Some((n, [x0, x1, y0, y1])) = options.refine {
        if options.symmetric {
            interior.extend(jittered_grid([x0, x1, y0, y1], n, seed ^ 0x5eed, &inside));
        } else {
            let half = n / 2;
            interior.extend(jittered_grid([x0, x1, y0, y1], half, seed ^ 0x5eed, &inside));
            interior.extend(jittered_grid([-x1, -x0, y0, y1], n - half, seed ^ 0xfeed, &inside));
        }
    }

    // Arc angle phi measured from the lowest point, positive towards +x.
    let arc = move |phi0: f64, phi1: f64| {
        move |t: f64| {
            let phi = phi0 + t * (phi1 - phi0);
            let (s, c) = phi.sin_cos();
            ([r * s, -r * c], [s, -c])
        }
    };
    let top_len = r - xmin;
    let mut edges = vec![Edge {
        tag: Tag::Nbc(2),
        length: top_len,
        at: Box::new(move |t| ([xmin + t * top_len, 0.0], [0.0, 1.0])),
    }];
    if options.symmetric {
        edges.push(Edge {
            tag: Tag::Symmetry,
            length: r,
            at: Box::new(move |t| ([0.0, -t * r], [-1.0, 0.0])),
        });
    } else {
        edges.push(Edge {
            tag: Tag::Nbc(3),
            length: (FRAC_PI_2 - alpha) * r,
            at: Box::new(arc(-FRAC_PI_2, -alpha)),
        });
    }
    edges.push(Edge {
        tag: Tag::Nbc(3),
        length: (FRAC_PI_2 - alpha) * r,
        at: Box::new(arc(alpha, FRAC_PI_2)),
    });
    let contact = Edge {
        tag: Tag::Contact,
        length: if options.symmetric { alpha * r } else { 2.0 * alpha * r },
        at: Box::new(arc(if options.symmetric { 0.0 } else { -alpha }, alpha)),
    };
    let boundary = match options.contact_share {
        Some(share) => {
            if !(0.0..=1.0).contains(&share) {
                return Err(Error::InvalidGeometry(format!(
                    "contact share must be in [0, 1], got {share}"
                )));
            }
            let n_contact = (share * counts.boundary as f64).round() as usize;
            let mut pts = sample_edges(&edges, counts.boundary - n_contact);
            pts.extend(edge_points(&contact, n_contact));
            pts
        }
        None => {
            edges.push(contact);
            sample_edges(&edges, counts.boundary)
        }
    };
    let (nr, nt) = options.test_mesh;
    Ok(PointSet {
        interior,
        boundary,
        test: half_cylinder_test_mesh(r, options.symmetric, nr, nt).nodes,
    })
}

/// Quadrilateral mesh given by an `nu x nv` grid of nodes; node `(i, j)` is
/// stored at `j * nu + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredMesh {
    pub nu: usize,
    pub nv: usize,
    pub nodes: Vec<[f64; 2]>,
}

impl StructuredMesh {
    pub fn from_map(nu: usize, nv: usize, map: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let mut nodes = Vec::with_capacity(nu * nv);
        for j in 0..nv {
            for i in 0..nu {
                let u = i as f64 / (nu - 1) as f64;
                let v = j as f64 / (nv - 1) as f64;
                nodes.push(map(u, v));
            }
        }
        StructuredMesh { nu, nv, nodes }
    }

    pub fn rectangle(bbox: [f64; 4], nu: usize, nv: usize) -> Self {
        let [x0, x1, y0, y1] = bbox;
        Self::from_map(nu, nv, |u, v| [x0 + u * (x1 - x0), y0 + v * (y1 - y0)])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Corner node indices of cell `(i, j)`, counter-clockwise in `(u, v)`.
    fn cell(&self, i: usize, j: usize) -> [usize; 4] {
        let a = j * self.nu + i;
        [a, a + 1, a + 1 + self.nu, a + self.nu]
    }

    fn cell_area(&self, c: [usize; 4]) -> f64 {
        let mut twice = 0.0;
        for k in 0..4 {
            let p = self.nodes[c[k]];
            let q = self.nodes[c[(k + 1) % 4]];
            twice += p[0] * q[1] - q[0] * p[1];
        }
        0.5 * twice.abs()
    }

    /// Cell-wise quadrature: area times the mean of the corner values.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.nodes.len() {
            return Err(Error::Shape(format!(
                "{} nodal values for a mesh with {} nodes",
                values.len(),
                self.nodes.len()
            )));
        }
        if self.nu < 2 || self.nv < 2 {
            return Err(Error::InvalidGeometry("mesh has no cells".into()));
        }
        let mut total = 0.0;
        for j in 0..self.nv - 1 {
            for i in 0..self.nu - 1 {
                let c = self.cell(i, j);
                let area = self.cell_area(c);
                if area <= 0.0 {
                    return Err(Error::InvalidGeometry(format!("degenerate cell ({i}, {j})")));
                }
                total += area * c.iter().map(|&k| values[k]).sum::<f64>() / 4.0;
            }
        }
        Ok(total)
    }

    pub fn area(&self) -> Result<f64> {
        self.integrate(&vec![1.0; self.nodes.len()])
    }
}

/// Polar `48 x 148` node mesh of the quarter annulus (7104 nodes).
pub fn lame_test_mesh(r_i: f64, r_o: f64) -> StructuredMesh {
    StructuredMesh::from_map(48, 148, |u, v| {
        let r = r_i + u * (r_o - r_i);
        let (s, c) = (v * FRAC_PI_2).sin_cos();
        [r * c, r * s]
    })
}

/// Mesh of the half-cylinder (or its `x >= 0` half) from an elliptic
/// square-to-disk map, which has no degenerate cells.
pub fn half_cylinder_test_mesh(radius: f64, symmetric: bool, nu: usize, nv: usize) -> StructuredMesh {
    let disk = |a: f64, b: f64| [a * (1.0 - 0.5 * b * b).sqrt(), b * (1.0 - 0.5 * a * a).sqrt()];
    StructuredMesh::from_map(nu, nv, |u, v| {
        let a = if symmetric { u } else { 2.0 * u - 1.0 };
        let [x, y] = disk(a, -v);
        [radius * x, radius * y]
    })
}

const HEADER: [&str; 7] = ["x", "y", "kind", "tag", "nx", "ny", "Yref"];

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the point CSV (`x,y,kind,tag,nx,ny,Yref`).
pub fn write_points<W: Write>(set: &PointSet, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(HEADER)?;
    let plain = |w: &mut csv::Writer<W>, p: &[f64; 2], kind: &str| {
        w.write_record([&fmt_f64(p[0]), &fmt_f64(p[1]), kind, "", "", "", &fmt_f64(p[1])])
    };
    for p in &set.interior {
        plain(&mut w, p, "interior")?;
    }
    for b in &set.boundary {
        w.write_record([
            &fmt_f64(b.position[0]),
            &fmt_f64(b.position[1]),
            "boundary",
            &b.tag.to_string(),
            &fmt_f64(b.normal[0]),
            &fmt_f64(b.normal[1]),
            &fmt_f64(b.position[1]),
        ])?;
    }
    for p in &set.test {
        plain(&mut w, p, "test")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points<R: Read>(reader: R) -> Result<PointSet> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::PointFile(format!(
            "expected header {}, got {}",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut set = PointSet::default();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let num = |i: usize| -> Result<f64> {
            record[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::PointFile(format!("row {row}: bad {} '{}'", HEADER[i], &record[i])))
        };
        let p = [num(0)?, num(1)?];
        match &record[2] {
            "interior" => set.interior.push(p),
            "test" => set.test.push(p),
            "boundary" => {
                let tag: Tag = record[3]
                    .parse()
                    .map_err(|e: Error| Error::PointFile(format!("row {row}: {e}")))?;
                if record[4].trim().is_empty() || record[5].trim().is_empty() {
                    return Err(Error::PointFile(format!("row {row}: missing normal on {tag} point")));
                }
                let n = [num(4)?, num(5)?];
                if (n[0].hypot(n[1]) - 1.0).abs() > 1e-9 {
                    return Err(Error::PointFile(format!("row {row}: normal is not unit length")));
                }
                set.boundary.push(BoundaryPoint::new(p, tag, n));
            }
            other => return Err(Error::PointFile(format!("row {row}: unknown kind '{other}'"))),
        }
    }
    if set.interior.is_empty() && set.boundary.is_empty() && set.test.is_empty() {
        return Err(Error::PointFile("no points".into()));
    }
    Ok(set)
}

pub fn save_points(set: &PointSet, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_points(set, &mut buf)?;
    crate::io::write_atomic(path, &buf)
}

pub fn load_points(path: &Path) -> Result<PointSet> {
    read_points(std::fs::File::open(path)?)
}
