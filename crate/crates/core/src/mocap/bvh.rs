//! BioVision hierarchy (BVH) reading and writing.
//!
//! Rotation channels are composed in the order the file declares them, so
//! `Zrotation Xrotation Yrotation` yields `q = qz · qx · qy`. The root position
//! is its `OFFSET` plus the translation channels. Position channels on
//! non-root joints are accepted and ignored since offsets are constant. End
//! Sites carry no rotation and are dropped from the joint list; the writer
//! emits a zero-length End Site on every leaf so the output stays readable by
//! common viewers.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kinematics::{EulerOrder, Quat, Vec3};

use super::clip::{MotionClip, Skeleton};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Channel {
    Position(usize),
    Rotation(usize),
}

impl Channel {
    fn parse(name: &str) -> Option<Channel> {
        let axis = match name.as_bytes().first()?.to_ascii_uppercase() {
            b'X' => 0,
            b'Y' => 1,
            b'Z' => 2,
            _ => return None,
        };
        match name[1..].to_ascii_lowercase().as_str() {
            "position" => Some(Channel::Position(axis)),
            "rotation" => Some(Channel::Rotation(axis)),
            _ => None,
        }
    }
}

struct Token<'a> {
    text: &'a str,
    line: usize,
}

struct Tokens<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(lines: &[(usize, &'a str)]) -> Self {
        let tokens = lines
            .iter()
            .flat_map(|&(line, text)| text.split_whitespace().map(move |t| Token { text: t, line }))
            .collect();
        Self {
            tokens,
            pos: 0,
            last_line: lines.last().map_or(1, |l| l.0),
        }
    }

    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn line(&self) -> usize {
        self.peek().map_or(self.last_line, |t| t.line)
    }

    fn next(&mut self, what: &str) -> Result<&Token<'a>> {
        let line = self.line();
        let t = self.tokens.get(self.pos).ok_or_else(|| Error::Parse {
            line,
            message: format!("unexpected end of input, expected {what}"),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, word: &str) -> Result<usize> {
        let t = self.next(word)?;
        if !t.text.eq_ignore_ascii_case(word) {
            return Err(Error::Parse {
                line: t.line,
                message: format!("expected {word:?}, found {:?}", t.text),
            });
        }
        Ok(t.line)
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let t = self.next(what)?;
        t.text
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Parse {
                line: t.line,
                message: format!("expected {what}, found {:?}", t.text),
            })
    }
}

struct JointDecl {
    name: String,
    parent: i32,
    offset: Vec3,
    channels: Vec<Channel>,
}

fn parse_joint(tokens: &mut Tokens<'_>, parent: i32, joints: &mut Vec<JointDecl>) -> Result<()> {
    // Names run to the end of the line or the opening brace.
    let name_line = tokens.line();
    let mut name_parts = Vec::new();
    while let Some(t) = tokens.peek() {
        if t.line != name_line || t.text == "{" {
            break;
        }
        name_parts.push(t.text);
        tokens.pos += 1;
    }
    if name_parts.is_empty() {
        return Err(Error::Parse {
            line: name_line,
            message: "joint is missing a name".into(),
        });
    }
    tokens.expect("{")?;
    let index = joints.len() as i32;
    joints.push(JointDecl {
        name: name_parts.join(" "),
        parent,
        offset: [0.0; 3],
        channels: Vec::new(),
    });
    let mut seen_offset = false;
    loop {
        let t = tokens.next("OFFSET, CHANNELS, JOINT, End Site or }")?;
        let line = t.line;
        match t.text.to_ascii_uppercase().as_str() {
            "OFFSET" => {
                let offset = [
                    tokens.number("offset x")?,
                    tokens.number("offset y")?,
                    tokens.number("offset z")?,
                ];
                joints[index as usize].offset = offset;
                seen_offset = true;
            }
            "CHANNELS" => {
                let count = tokens.number("channel count")?;
                if count < 0.0 || count.fract() != 0.0 || count > 6.0 {
                    return Err(Error::Structural(format!(
                        "line {line}: invalid channel count {count}"
                    )));
                }
                let mut channels = Vec::with_capacity(count as usize);
                for _ in 0..count as usize {
                    let c = tokens.next("channel name")?;
                    let channel = Channel::parse(c.text).ok_or_else(|| {
                        Error::Structural(format!(
                            "line {}: unsupported channel {:?}",
                            c.line, c.text
                        ))
                    })?;
                    if channels.contains(&channel) {
                        return Err(Error::Structural(format!(
                            "line {}: duplicate channel {:?}",
                            c.line, c.text
                        )));
                    }
                    channels.push(channel);
                }
                joints[index as usize].channels = channels;
            }
            "JOINT" => parse_joint(tokens, index, joints)?,
            "END" => {
                tokens.expect("Site")?;
                tokens.expect("{")?;
                tokens.expect("OFFSET")?;
                for axis in ["x", "y", "z"] {
                    tokens.number(&format!("end site offset {axis}"))?;
                }
                tokens.expect("}")?;
            }
            "}" => break,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unexpected token {other:?} in joint block"),
                })
            }
        }
    }
    if !seen_offset {
        return Err(Error::Parse {
            line: name_line,
            message: format!("joint {:?} has no OFFSET", joints[index as usize].name),
        });
    }
    Ok(())
}

/// Parse BVH text into a skeleton and a hemisphere-canonicalized clip.
pub fn parse_bvh(text: &str) -> Result<(Skeleton, MotionClip)> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .collect();
    let motion_at = lines
        .iter()
        .position(|(_, l)| l.trim().eq_ignore_ascii_case("MOTION"))
        .ok_or_else(|| Error::Parse {
            line: lines.len().max(1),
            message: "missing MOTION section".into(),
        })?;

    let mut tokens = Tokens::new(&lines[..motion_at]);
    tokens.expect("HIERARCHY")?;
    tokens.expect("ROOT")?;
    let mut joints = Vec::new();
    parse_joint(&mut tokens, -1, &mut joints)?;
    if let Some(t) = tokens.peek() {
        return Err(Error::Parse {
            line: t.line,
            message: format!("unexpected {:?} after root joint (only one root is allowed)", t.text),
        });
    }

    // MOTION header: "Frames: n" then "Frame Time: f".
    let mut rest = lines[motion_at + 1..].iter().filter(|(_, l)| !l.trim().is_empty());
    let (frames_line, frames_text) = rest.next().ok_or_else(|| Error::Parse {
        line: lines[motion_at].0,
        message: "missing Frames: line".into(),
    })?;
    let frames = frames_text
        .trim()
        .strip_prefix("Frames:")
        .and_then(|v| v.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::Parse {
            line: *frames_line,
            message: format!("expected \"Frames: <count>\", found {:?}", frames_text.trim()),
        })?;
    let (time_line, time_text) = rest.next().ok_or_else(|| Error::Parse {
        line: *frames_line,
        message: "missing Frame Time: line".into(),
    })?;
    let frame_time = time_text
        .trim()
        .strip_prefix("Frame Time:")
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|t| t.is_finite() && *t > 0.0)
        .ok_or_else(|| Error::Parse {
            line: *time_line,
            message: format!("expected \"Frame Time: <seconds>\", found {:?}", time_text.trim()),
        })?;
    let fps = (1.0 / frame_time).round();
    if !(1.0..=u32::MAX as f64).contains(&fps) {
        return Err(Error::Parse {
            line: *time_line,
            message: format!("frame time {frame_time} gives an unusable frame rate"),
        });
    }

    let width: usize = joints.iter().map(|j| j.channels.len()).sum();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(frames);
    for (line, text) in rest {
        let values = text
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: *line,
                        message: format!("invalid number {v:?}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != width {
            return Err(Error::Structural(format!(
                "line {line}: motion row has {} values but the hierarchy declares {width} channels",
                values.len()
            )));
        }
        rows.push(values);
    }
    if rows.len() != frames {
        return Err(Error::Structural(format!(
            "header declares {frames} frames but {} motion rows follow",
            rows.len()
        )));
    }

    let names = joints.iter().map(|j| j.name.clone()).collect();
    let parents = joints.iter().map(|j| j.parent).collect();
    let offsets = joints.iter().map(|j| j.offset).collect();
    let mut skeleton = Skeleton::new(names, parents, offsets)?;
    for (slot, joint) in skeleton.rotation_orders.iter_mut().zip(&joints) {
        let axes: Vec<usize> = joint
            .channels
            .iter()
            .filter_map(|c| match c {
                Channel::Rotation(a) => Some(*a),
                Channel::Position(_) => None,
            })
            .collect();
        if let Ok(axes) = <[usize; 3]>::try_from(axes) {
            if let Some(order) = EulerOrder::from_axes(axes) {
                *slot = order;
            }
        }
    }

    let j = joints.len();
    let mut root_positions = Vec::with_capacity(frames);
    let mut local_rotations = Vec::with_capacity(frames * j);
    for row in &rows {
        let mut values = row.iter();
        for (index, joint) in joints.iter().enumerate() {
            let mut translation = [0.0; 3];
            let mut q = Quat::IDENTITY;
            for channel in &joint.channels {
                let v = *values.next().expect("row width checked above");
                match *channel {
                    Channel::Position(axis) => translation[axis] = v,
                    Channel::Rotation(axis) => {
                        let mut a = [0.0; 3];
                        a[axis] = 1.0;
                        q = q * Quat::from_axis_angle(a, v.to_radians());
                    }
                }
            }
            if index == 0 {
                let o = joint.offset;
                root_positions.push([o[0] + translation[0], o[1] + translation[1], o[2] + translation[2]]);
            }
            local_rotations.push(q.normalize());
        }
    }

    let mut clip = MotionClip {
        skeleton: skeleton.clone(),
        fps: fps as u32,
        root_positions,
        local_rotations,
    };
    clip.canonicalize_hemispheres();
    clip.validate()?;
    Ok((skeleton, clip))
}

/// Write a clip as BVH using each joint's stored Euler order.
pub fn write_bvh(clip: &MotionClip) -> String {
    let skeleton = &clip.skeleton;
    let j = skeleton.len();
    let mut children = vec![Vec::new(); j];
    for joint in 1..j {
        children[skeleton.parent(joint).expect("non-root has parent")].push(joint);
    }

    let mut out = String::from("HIERARCHY\n");
    let mut order = Vec::with_capacity(j);
    write_joint(&mut out, skeleton, &children, 0, 0, &mut order);

    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", clip.len());
    let _ = writeln!(out, "Frame Time: {}", 1.0 / clip.fps as f64);
    for frame in 0..clip.len() {
        let mut row: Vec<String> = Vec::with_capacity(3 + 3 * j);
        let root = clip.root_positions[frame];
        let o = skeleton.offsets[0];
        row.extend((0..3).map(|a| format!("{}", root[a] - o[a])));
        for &joint in &order {
            let angles = skeleton.rotation_orders[joint].from_quat(clip.rotation(frame, joint));
            row.extend(angles.iter().map(|a| format!("{}", a.to_degrees())));
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn write_joint(
    out: &mut String,
    skeleton: &Skeleton,
    children: &[Vec<usize>],
    joint: usize,
    depth: usize,
    order: &mut Vec<usize>,
) {
    let pad = "\t".repeat(depth);
    let keyword = if joint == 0 { "ROOT" } else { "JOINT" };
    let o = skeleton.offsets[joint];
    let rot: Vec<String> = skeleton.rotation_orders[joint]
        .axes()
        .iter()
        .map(|a| format!("{}rotation", ['X', 'Y', 'Z'][*a]))
        .collect();
    let _ = writeln!(out, "{pad}{keyword} {}", skeleton.joint_names[joint]);
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(out, "{pad}\tOFFSET {} {} {}", o[0], o[1], o[2]);
    if joint == 0 {
        let _ = writeln!(out, "{pad}\tCHANNELS 6 Xposition Yposition Zposition {}", rot.join(" "));
    } else {
        let _ = writeln!(out, "{pad}\tCHANNELS 3 {}", rot.join(" "));
    }
    order.push(joint);
    for &child in &children[joint] {
        write_joint(out, skeleton, children, child, depth + 1, order);
    }
    if children[joint].is_empty() {
        let _ = writeln!(out, "{pad}\tEnd Site\n{pad}\t{{\n{pad}\t\tOFFSET 0 0 0\n{pad}\t}}");
    }
    let _ = writeln!(out, "{pad}}}");
}
