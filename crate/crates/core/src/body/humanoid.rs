use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{BodyBuilder, BodySpec, JointKind};
use crate::error::{Error, Result};
use crate::mathcore::{SpatialInertia, Vec3};

/// The default body file shipped with the library.
pub const DEFAULT_BODY_TOML: &str = include_str!("../../data/humanoid.toml");
const MASS_FRACTIONS_TOML: &str = include_str!("../../data/mass_fractions.toml");

pub const FORMAT: &str = "physmotion-body";

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub length: f64,
    pub radius: f64,
    pub width: Option<f64>,
    pub height: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub kind: String,
    pub axis: Option<[f64; 3]>,
    pub lower_deg: Vec<f64>,
    pub upper_deg: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointEntry {
    pub name: String,
    pub link: String,
    pub offset: [f64; 3],
}

/// Parsed body file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anthropometry {
    pub format: String,
    pub version: u32,
    #[serde(default = "default_mass")]
    pub total_mass_kg: f64,
    #[serde(default)]
    pub armature: f64,
    pub segments: BTreeMap<String, Segment>,
    pub joints: BTreeMap<String, JointEntry>,
    #[serde(default)]
    pub keypoints: Vec<KeypointEntry>,
    /// Overrides the built-in mass distribution; keys as in the segment table.
    pub mass_fractions: Option<BTreeMap<String, f64>>,
}

fn default_mass() -> f64 {
    70.0
}

impl Anthropometry {
    pub fn default_humanoid() -> Anthropometry {
        parse_body_spec(DEFAULT_BODY_TOML).expect("built-in body file is valid")
    }

    /// Multiplies every segment dimension (not the mass) by `s`.
    pub fn scaled(&self, s: f64) -> Anthropometry {
        let mut a = self.clone();
        for seg in a.segments.values_mut() {
            seg.length *= s;
            seg.radius *= s;
            seg.width = seg.width.map(|w| w * s);
            seg.height = seg.height.map(|h| h * s);
        }
        for k in a.keypoints.iter_mut() {
            k.offset = k.offset.map(|v| v * s);
        }
        a
    }
}

pub fn parse_body_spec(text: &str) -> Result<Anthropometry> {
    let a: Anthropometry = toml::from_str(text).map_err(|e| Error::InvalidBody(e.to_string()))?;
    if a.format != FORMAT {
        return Err(Error::InvalidBody(format!("format must be \"{FORMAT}\", got \"{}\"", a.format)));
    }
    if a.version != 1 {
        return Err(Error::InvalidBody(format!("unsupported version {}", a.version)));
    }
    Ok(a)
}

/// Reads and builds a body file.
pub fn load_body_file(path: &Path) -> Result<BodySpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let a = parse_body_spec(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    build_humanoid(&a, a.total_mass_kg)
}

fn default_fractions() -> BTreeMap<String, f64> {
    toml::from_str(MASS_FRACTIONS_TOML).expect("built-in mass table is valid")
}

const SEGMENTS: [&str; 11] = [
    "pelvis", "abdomen", "chest", "neck", "head", "upper_arm", "forearm", "hand", "thigh", "shin", "foot",
];

const JOINTS: [&str; 16] = [
    "lower_spine",
    "upper_spine",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_hip",
    "right_knee",
    "right_ankle",
];

struct Dims<'a>(&'a BTreeMap<String, Segment>);

impl Dims<'_> {
    fn l(&self, s: &str) -> f64 {
        self.0[s].length
    }
    fn r(&self, s: &str) -> f64 {
        self.0[s].radius
    }
    fn w(&self, s: &str) -> f64 {
        self.0[s].width.unwrap_or(0.0)
    }
    fn h(&self, s: &str) -> f64 {
        self.0[s].height.unwrap_or(0.0)
    }
}

fn validate(a: &Anthropometry, total_mass: f64) -> Result<()> {
    let mut problems = Vec::new();
    if !(total_mass > 0.0) {
        problems.push(format!("total_mass_kg must be positive (got {total_mass})"));
    }
    if !(a.armature >= 0.0) {
        problems.push("armature must be nonnegative".to_string());
    }
    for s in SEGMENTS {
        match a.segments.get(s) {
            None => problems.push(format!("segments.{s} is missing")),
            Some(seg) => {
                if !(seg.length > 0.0) {
                    problems.push(format!("segments.{s}.length must be positive"));
                }
                if !(seg.radius > 0.0) {
                    problems.push(format!("segments.{s}.radius must be positive"));
                }
            }
        }
    }
    for (s, field) in [("pelvis", "width"), ("chest", "width"), ("foot", "height")] {
        if let Some(seg) = a.segments.get(s) {
            let v = if field == "width" { seg.width } else { seg.height };
            if !matches!(v, Some(x) if x > 0.0) {
                problems.push(format!("segments.{s}.{field} must be present and positive"));
            }
        }
    }
    if let Some(foot) = a.segments.get("foot") {
        if foot.height.unwrap_or(0.0) <= foot.radius {
            problems.push("segments.foot.height must exceed segments.foot.radius".to_string());
        }
    }
    for name in a.segments.keys() {
        if !SEGMENTS.contains(&name.as_str()) {
            problems.push(format!("segments.{name} is not a known segment"));
        }
    }
    for j in JOINTS {
        match a.joints.get(j) {
            None => problems.push(format!("joints.{j} is missing")),
            Some(e) => {
                let n = match e.kind.as_str() {
                    "spherical" => 3,
                    "revolute" => {
                        match e.axis {
                            Some(ax) if (ax[0] * ax[0] + ax[1] * ax[1] + ax[2] * ax[2]) > 1e-12 => {}
                            _ => problems.push(format!("joints.{j}.axis must be a nonzero 3-vector")),
                        }
                        1
                    }
                    other => {
                        problems.push(format!("joints.{j}.kind \"{other}\" is not spherical or revolute"));
                        continue;
                    }
                };
                if e.lower_deg.len() != n || e.upper_deg.len() != n {
                    problems.push(format!("joints.{j} limits need {n} entries"));
                }
                for (k, (lo, hi)) in e.lower_deg.iter().zip(&e.upper_deg).enumerate() {
                    if lo > hi {
                        problems.push(format!("joints.{j}: lower_deg[{k}] > upper_deg[{k}]"));
                    }
                }
            }
        }
    }
    for name in a.joints.keys() {
        if !JOINTS.contains(&name.as_str()) {
            problems.push(format!("joints.{name} is not a known joint"));
        }
    }
    if let Some(fr) = &a.mass_fractions {
        for s in SEGMENTS {
            match fr.get(s) {
                Some(v) if *v > 0.0 => {}
                _ => problems.push(format!("mass_fractions.{s} must be present and positive")),
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidBody(problems.join("; ")))
    }
}

/// Builds the 17-link, 26-capsule humanoid with a floating pelvis.
///
/// Link masses are `total_mass` times the normalized segment fraction; each
/// link's mass is spread over its capsules by volume.
pub fn build_humanoid(a: &Anthropometry, total_mass: f64) -> Result<BodySpec> {
    validate(a, total_mass)?;
    let d = Dims(&a.segments);
    let fractions = a.mass_fractions.clone().unwrap_or_else(default_fractions);
    let z = Vec3::ZERO;
    let v = Vec3::c;
    let placeholder = SpatialInertia::point_mass(1.0, z);

    let mut b = BodyBuilder::new().armature(a.armature);
    let kind = |j: &str| {
        let e = &a.joints[j];
        match e.kind.as_str() {
            "revolute" => {
                let ax = e.axis.unwrap();
                JointKind::Revolute(Vec3::c(ax[0], ax[1], ax[2]).normalized())
            }
            _ => JointKind::Spherical,
        }
    };

    // Pelvis origin sits at hip-joint height.
    let (pl, pr, pw) = (d.l("pelvis"), d.r("pelvis"), d.w("pelvis"));
    let pelvis = b.link("pelvis", None, "root", JointKind::Floating, z, placeholder);
    b.capsule(pelvis, v(-pw / 4.0, pl / 2.0, 0.0), v(pw / 4.0, pl / 2.0, 0.0), pr);
    b.capsule(pelvis, v(pw / 2.0, 0.0, 0.0), v(pw / 4.0, pl / 2.0, 0.0), 0.75 * pr);
    b.capsule(pelvis, v(-pw / 2.0, 0.0, 0.0), v(-pw / 4.0, pl / 2.0, 0.0), 0.75 * pr);

    let al = d.l("abdomen");
    let abdomen = b.link("abdomen", Some(pelvis), "lower_spine", kind("lower_spine"), v(0.0, pl, 0.0), placeholder);
    b.capsule(abdomen, z, v(0.0, al, 0.0), d.r("abdomen"));

    let (cl, cr, cw) = (d.l("chest"), d.r("chest"), d.w("chest"));
    let chest = b.link("chest", Some(abdomen), "upper_spine", kind("upper_spine"), v(0.0, al, 0.0), placeholder);
    let sh_y = 0.85 * cl;
    b.capsule(chest, v(0.0, 0.1 * cl, 0.0), v(0.0, 0.6 * cl, 0.0), cr);
    b.capsule(chest, v(0.15 * cw, sh_y, 0.0), v(cw / 2.0 - 0.05, sh_y, 0.0), 0.5 * cr);
    b.capsule(chest, v(-0.15 * cw, sh_y, 0.0), v(-(cw / 2.0 - 0.05), sh_y, 0.0), 0.5 * cr);

    let nl = d.l("neck");
    let neck = b.link("neck", Some(chest), "neck", kind("neck"), v(0.0, cl, 0.0), placeholder);
    b.capsule(neck, z, v(0.0, nl, 0.0), d.r("neck"));

    let (hl, hr) = (d.l("head"), d.r("head"));
    let head = b.link("head", Some(neck), "head", kind("head"), v(0.0, nl, 0.0), placeholder);
    b.capsule(head, v(0.0, 0.45 * hl, 0.0), v(0.0, hl - hr, 0.0), hr);
    b.capsule(head, v(0.0, 0.2 * hl, 0.35 * hr), v(0.0, 0.35 * hl, 0.5 * hr), 0.55 * hr);

    let mut feet = Vec::new();
    for (side, sx) in [("left", 1.0), ("right", -1.0)] {
        let j = |n: &str| format!("{side}_{n}");
        let (ul, fl, hl) = (d.l("upper_arm"), d.l("forearm"), d.l("hand"));
        let ua = b.link(&j("upper_arm"), Some(chest), &j("shoulder"), kind(&j("shoulder")), v(sx * cw / 2.0, sh_y, 0.0), placeholder);
        b.capsule(ua, z, v(0.0, -ul, 0.0), d.r("upper_arm"));
        let fa = b.link(&j("forearm"), Some(ua), &j("elbow"), kind(&j("elbow")), v(0.0, -ul, 0.0), placeholder);
        b.capsule(fa, z, v(0.0, -fl, 0.0), d.r("forearm"));
        let hand = b.link(&j("hand"), Some(fa), &j("wrist"), kind(&j("wrist")), v(0.0, -fl, 0.0), placeholder);
        let hr = d.r("hand");
        b.capsule(hand, v(0.0, -0.1 * hl, 0.0), v(0.0, -0.45 * hl, 0.0), hr);
        b.capsule(hand, v(0.0, -0.55 * hl, 0.0), v(0.0, -0.9 * hl + 0.7 * hr, 0.0), 0.7 * hr);
    }
    for (side, sx) in [("left", 1.0), ("right", -1.0)] {
        let j = |n: &str| format!("{side}_{n}");
        let (tl, sl) = (d.l("thigh"), d.l("shin"));
        let thigh = b.link(&j("thigh"), Some(pelvis), &j("hip"), kind(&j("hip")), v(sx * pw / 2.0, 0.0, 0.0), placeholder);
        b.capsule(thigh, z, v(0.0, -tl, 0.0), d.r("thigh"));
        let shin = b.link(&j("shin"), Some(thigh), &j("knee"), kind(&j("knee")), v(0.0, -tl, 0.0), placeholder);
        b.capsule(shin, z, v(0.0, -sl, 0.0), d.r("shin"));
        let foot = b.link(&j("foot"), Some(shin), &j("ankle"), kind(&j("ankle")), v(0.0, -sl, 0.0), placeholder);
        let (ft_l, ft_r, ft_h) = (d.l("foot"), d.r("foot"), d.h("foot"));
        // Heel and ball capsules run across the foot so their end caps span a
        // rectangular sole; lengthwise capsules would let the foot roll sideways.
        let toe_r = 0.85 * ft_r;
        let hw = 0.6 * ft_r;
        b.capsule(foot, v(-hw, -(ft_h - ft_r), -0.08 * ft_l), v(hw, -(ft_h - ft_r), -0.08 * ft_l), ft_r);
        b.capsule(foot, v(-hw, -(ft_h - toe_r), 0.6 * ft_l), v(hw, -(ft_h - toe_r), 0.6 * ft_l), toe_r);
        feet.push(foot);
    }
    b.feet(feet);

    for (link, entry) in a.joints.iter().filter_map(|(n, e)| Some((link_of_joint(n)?, e))) {
        let id = b.links.iter().position(|l| l.name == link).expect("topology");
        let lo = entry.lower_deg.iter().map(|x| x.to_radians()).collect();
        let hi = entry.upper_deg.iter().map(|x| x.to_radians()).collect();
        b.limits(id, lo, hi);
    }

    let sum: f64 = b
        .links
        .iter()
        .map(|l| fractions[segment_of(&l.name)])
        .sum();
    for id in 0..b.links.len() {
        let m = total_mass * fractions[segment_of(&b.links[id].name)] / sum;
        let caps: Vec<_> = b.capsules.iter().filter(|c| c.link == id).copied().collect();
        let vol: f64 = caps.iter().map(|c| c.volume()).sum();
        let mut acc: Option<SpatialInertia> = None;
        for c in &caps {
            let ci = c.link_inertia(m * c.volume() / vol);
            acc = Some(match acc {
                None => ci,
                Some(a) => a.combine(&ci),
            });
        }
        b.set_inertia(id, acc.expect("every link has capsules"));
    }

    for k in &a.keypoints {
        let id = b
            .links
            .iter()
            .position(|l| l.name == k.link)
            .ok_or_else(|| Error::InvalidBody(format!("keypoint {} references unknown link {}", k.name, k.link)))?;
        b.keypoint(&k.name, id, Vec3::c(k.offset[0], k.offset[1], k.offset[2]));
    }
    b.build()
}

fn link_of_joint(joint: &str) -> Option<String> {
    let link = match joint {
        "lower_spine" => "abdomen",
        "upper_spine" => "chest",
        "neck" => "neck",
        "head" => "head",
        _ => {
            let (side, rest) = joint.split_once('_')?;
            let l = match rest {
                "shoulder" => "upper_arm",
                "elbow" => "forearm",
                "wrist" => "hand",
                "hip" => "thigh",
                "knee" => "shin",
                "ankle" => "foot",
                _ => return None,
            };
            return Some(format!("{side}_{l}"));
        }
    };
    Some(link.to_string())
}

fn segment_of(link: &str) -> &str {
    link.strip_prefix("left_")
        .or_else(|| link.strip_prefix("right_"))
        .unwrap_or(link)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard() -> BodySpec {
        let a = Anthropometry::default_humanoid();
        build_humanoid(&a, a.total_mass_kg).unwrap()
    }

    #[test]
    fn standard_counts() {
        let b = standard();
        assert_eq!(b.capsules.len(), 26);
        assert_eq!(b.n_actuated_joints(), 16);
        assert_eq!(b.nv(), 48);
        assert_eq!(b.na(), 42);
        assert_eq!(b.nq(), 62);
        assert_eq!(b.n_links(), 17);
        assert_eq!(b.keypoints[0].name, "pelvis");
    }

    #[test]
    fn masses_sum_to_total() {
        let b = standard();
        assert!((b.total_mass() - 70.0).abs() < 1e-9);
        let a = Anthropometry::default_humanoid();
        let heavy = build_humanoid(&a, 92.5).unwrap();
        assert!((heavy.total_mass() - 92.5).abs() < 1e-9);
    }

    #[test]
    fn every_link_is_physical() {
        for l in &standard().links {
            assert!(l.inertia.is_physical(1e-9), "{}", l.name);
        }
    }

    #[test]
    fn doubled_radii_keep_masses_and_match_closed_form() {
        let a = Anthropometry::default_humanoid();
        let mut a2 = a.clone();
        for s in a2.segments.values_mut() {
            s.radius *= 2.0;
        }
        // Foot height must stay above the doubled radius.
        a2.segments.get_mut("foot").unwrap().height = Some(0.2);
        let b1 = build_humanoid(&a, 70.0).unwrap();
        let b2 = build_humanoid(&a2, 70.0).unwrap();
        for (l1, l2) in b1.links.iter().zip(&b2.links) {
            assert!((l1.inertia.mass - l2.inertia.mass).abs() < 1e-12);
        }
        // Recompute one single-capsule link from the closed form.
        let id = b2.link_id("left_thigh").unwrap();
        let c = b2.capsules.iter().find(|c| c.link == id).unwrap();
        let m = b2.links[id].inertia.mass;
        let expect = capsule_inertia_closed(m, c.radius, c.half_length());
        let got = &b2.links[id].inertia.inertia;
        assert!((got.m[1][1] - expect.0).abs() < 1e-12);
        assert!((got.m[0][0] - expect.1).abs() < 1e-12);
        assert!((got.m[2][2] - expect.1).abs() < 1e-12);
    }

    // (axial, transverse) written out independently of the library routine.
    fn capsule_inertia_closed(m: f64, r: f64, hl: f64) -> (f64, f64) {
        let h = 2.0 * hl;
        let vc = h * r * r;
        let vs = 4.0 / 3.0 * r * r * r;
        let mc = m * vc / (vc + vs);
        let ms = m * vs / (vc + vs);
        let axial = 0.5 * mc * r * r + 0.4 * ms * r * r;
        let trans = mc * (3.0 * r * r + h * h) / 12.0 + ms * (0.4 * r * r + 0.25 * h * h + 0.375 * h * r);
        (axial, trans)
    }

    #[test]
    fn missing_and_bad_fields_are_listed() {
        let mut a = Anthropometry::default_humanoid();
        a.segments.remove("shin");
        a.segments.get_mut("thigh").unwrap().radius = -1.0;
        let err = build_humanoid(&a, 70.0).unwrap_err().to_string();
        assert!(err.contains("segments.shin is missing"), "{err}");
        assert!(err.contains("segments.thigh.radius"), "{err}");
    }

    #[test]
    fn inverted_limits_rejected() {
        let mut a = Anthropometry::default_humanoid();
        a.joints.get_mut("left_knee").unwrap().lower_deg = vec![200.0];
        let err = build_humanoid(&a, 70.0).unwrap_err().to_string();
        assert!(err.contains("left_knee"), "{err}");
    }

    #[test]
    fn limits_are_radians() {
        let b = standard();
        let knee = b.joint_id("left_knee").unwrap();
        assert!((b.links[knee].joint.upper[0] - 150f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn tree_is_rooted_at_pelvis() {
        let b = standard();
        assert_eq!(b.links[0].name, "pelvis");
        assert!(b.is_floating());
        for (i, l) in b.links.iter().enumerate().skip(1) {
            assert!(l.parent.unwrap() < i);
        }
    }

    #[test]
    fn rejects_wrong_format_header() {
        let text = DEFAULT_BODY_TOML.replace("physmotion-body", "something-else");
        assert!(parse_body_spec(&text).is_err());
    }
}
