//! On-disk dataset layout:
//!
//! ```text
//! <dir>/<clip>/frames/000000.ppm ...
//! <dir>/<clip>/events.evt1
//! <dir>/<clip>/meta.txt    (key=value: width, height, frame_count, t_start_us, t_end_us, theta, noise_floor)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::clip::{generate_synthetic_clip, SceneSpec, VideoClip};
use super::ppm::{read_ppm, write_ppm};
use crate::error::{Error, Result};
use crate::eventsim::io::{read_evt1, write_evt1};
use crate::eventsim::{synthesize_events, EventSimConfig, EventStream};

/// One clip with its synchronized event stream.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipData {
    pub clip: VideoClip,
    pub events: EventStream,
    pub theta: f64,
    pub noise_floor: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub clips: Vec<ClipData>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Renders a scene, snaps it to 8-bit levels and synthesizes its events.
pub fn synthesize_clip(spec: &SceneSpec, sim: &EventSimConfig) -> Result<ClipData> {
    let clip = generate_synthetic_clip(spec)?.map_frames(|f| Ok(f.quantized()))?;
    let events = synthesize_events(&clip, sim)?;
    Ok(ClipData {
        clip,
        events,
        theta: sim.theta,
        noise_floor: sim.noise_floor,
    })
}

fn meta_text(data: &ClipData) -> String {
    let c = &data.clip;
    format!(
        "width={}\nheight={}\nframe_count={}\nt_start_us={}\nt_end_us={}\ntheta={}\nnoise_floor={}\n",
        c.width(),
        c.height(),
        c.len(),
        c.t_start(),
        c.t_end(),
        data.theta,
        data.noise_floor
    )
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.ppm")
}

pub fn write_clip(dir: &Path, data: &ClipData) -> Result<PathBuf> {
    let clip_dir = dir.join(&data.clip.name);
    let frames_dir = clip_dir.join("frames");
    mkdir(&frames_dir)?;
    for (i, f) in data.clip.frames().iter().enumerate() {
        write_ppm(&frames_dir.join(frame_file_name(i)), f)?;
    }
    write_evt1(&clip_dir.join("events.evt1"), &data.events)?;
    let meta = clip_dir.join("meta.txt");
    fs::write(&meta, meta_text(data)).map_err(|e| Error::io(&meta, e))?;
    Ok(clip_dir)
}

/// Generates every scene and writes it under `out_dir`. Returns the clips as written.
pub fn build_dataset(specs: &[SceneSpec], sim: &EventSimConfig, out_dir: &Path) -> Result<Dataset> {
    let mut seen = std::collections::HashSet::new();
    for s in specs {
        if !seen.insert(s.name.as_str()) {
            return Err(Error::Input(format!("duplicate clip name `{}`", s.name)));
        }
    }
    mkdir(out_dir)?;
    let clips = specs
        .iter()
        .map(|spec| {
            let data = synthesize_clip(spec, sim)?;
            write_clip(out_dir, &data)?;
            Ok(data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { clips })
}

/// Parsed `meta.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipMeta {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub t_start_us: u64,
    pub t_end_us: u64,
    pub theta: f64,
    pub noise_floor: f64,
}

pub fn parse_meta(text: &str, path: &Path) -> Result<ClipMeta> {
    let mut kv = std::collections::HashMap::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let row = line.trim();
        if !row.is_empty() && !row.starts_with('#') {
            let (k, v) = row.split_once('=').ok_or_else(|| {
                Error::parse(path, offset, format!("expected key=value, got `{row}`"))
            })?;
            kv.insert(k.trim().to_string(), (v.trim().to_string(), offset));
        }
        offset += line.len() as u64;
    }
    fn field<T: std::str::FromStr>(
        kv: &std::collections::HashMap<String, (String, u64)>,
        key: &str,
        path: &Path,
        end: u64,
    ) -> Result<T> {
        let (v, at) = kv
            .get(key)
            .ok_or_else(|| Error::parse(path, end, format!("missing key `{key}`")))?;
        v.parse()
            .map_err(|_| Error::parse(path, *at, format!("invalid value `{v}` for `{key}`")))
    }
    let meta = ClipMeta {
        width: field(&kv, "width", path, offset)?,
        height: field(&kv, "height", path, offset)?,
        frame_count: field(&kv, "frame_count", path, offset)?,
        t_start_us: field(&kv, "t_start_us", path, offset)?,
        t_end_us: field(&kv, "t_end_us", path, offset)?,
        theta: field(&kv, "theta", path, offset)?,
        noise_floor: kv
            .contains_key("noise_floor")
            .then(|| field(&kv, "noise_floor", path, offset))
            .transpose()?
            .unwrap_or(EventSimConfig::default().noise_floor),
    };
    if meta.frame_count < 2 {
        return Err(Error::parse(path, 0, "frame_count must be >= 2"));
    }
    if meta.t_end_us <= meta.t_start_us
        || !(meta.t_end_us - meta.t_start_us).is_multiple_of(meta.frame_count as u64 - 1)
    {
        return Err(Error::parse(
            path,
            0,
            "t_start_us/t_end_us do not give a uniform integer frame interval",
        ));
    }
    Ok(meta)
}

pub fn read_meta(path: &Path) -> Result<ClipMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_meta(&text, path)
}

/// Reads the frames (and metadata, if present) of a clip directory.
pub fn read_clip_frames(clip_dir: &Path) -> Result<(VideoClip, Option<ClipMeta>)> {
    let name = clip_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".into());
    let meta_path = clip_dir.join("meta.txt");
    let meta = meta_path
        .exists()
        .then(|| read_meta(&meta_path))
        .transpose()?;
    let frames_dir = clip_dir.join("frames");
    let mut files: Vec<PathBuf> = fs::read_dir(&frames_dir)
        .map_err(|e| Error::io(&frames_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .collect();
    files.sort();
    let frames = files
        .iter()
        .map(|p| read_ppm(p))
        .collect::<Result<Vec<_>>>()?;
    let clip = match &meta {
        Some(m) => {
            if m.frame_count != frames.len() {
                return Err(Error::parse(
                    &meta_path,
                    0,
                    format!(
                        "frame_count={} but {} frames on disk",
                        m.frame_count,
                        frames.len()
                    ),
                ));
            }
            let step = (m.t_end_us - m.t_start_us) / (m.frame_count as u64 - 1);
            VideoClip::uniform(name, frames, m.t_start_us, step)?
        }
        None => VideoClip::uniform(name, frames, 0, super::clip::DEFAULT_FRAME_INTERVAL_US)?,
    };
    if let Some(m) = &meta {
        if (m.width, m.height) != (clip.width(), clip.height()) {
            return Err(Error::parse(
                &meta_path,
                0,
                "meta dims disagree with frames",
            ));
        }
    }
    Ok((clip, meta))
}

pub fn load_clip(clip_dir: &Path) -> Result<ClipData> {
    let (clip, meta) = read_clip_frames(clip_dir)?;
    let meta =
        meta.ok_or_else(|| Error::Input(format!("clip `{}`: missing meta.txt", clip.name)))?;
    let events_path = clip_dir.join("events.evt1");
    if !events_path.exists() {
        return Err(Error::Input(format!(
            "clip `{}`: missing events file {}",
            clip.name,
            events_path.display()
        )));
    }
    let events = read_evt1(&events_path)?;
    if (events.width(), events.height()) != (clip.width(), clip.height()) {
        return Err(Error::parse(
            &events_path,
            4,
            "sensor size disagrees with frames",
        ));
    }
    Ok(ClipData {
        clip,
        events,
        theta: meta.theta,
        noise_floor: meta.noise_floor,
    })
}

/// Loads every clip directory under `dir`, in name order.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let clips = dirs
        .iter()
        .map(|d| load_clip(d))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { clips })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_errors_carry_offsets() {
        let text = "width=4\nheight=x\n";
        let err = parse_meta(text, Path::new("meta.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 8, .. }), "{err}");
        let err = parse_meta("width=4\nnonsense\n", Path::new("m")).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 8, .. }), "{err}");
    }
}
