//! Per-image XML annotations.
//!
//! Schema (VOC-compatible):
//!
//! ```xml
//! <annotation>
//!   <filename>a.jpg</filename>
//!   <size><width>100</width><height>80</height><depth>3</depth></size>
//!   <object>
//!     <name>gun</name>
//!     <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>50</xmax><ymax>60</ymax></bndbox>
//!   </object>
//! </annotation>
//! ```
//!
//! Unknown elements are ignored. `depth` defaults to 3 when absent.

use std::fmt::Write as _;

use gds_core::{BoundingBox, FrameSize, GeometryError};
use quick_xml::events::Event;
use quick_xml::Reader;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotationError {
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("missing element <{0}>")]
    Missing(&'static str),
    #[error("element <{element}> has non-numeric value {value:?}")]
    Value { element: &'static str, value: String },
    #[error("{file}: {source}")]
    Geometry { file: String, source: GeometryError },
    #[error("{file}: image size {width}x{height} is not positive")]
    ImageSize { file: String, width: i64, height: i64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedObject {
    pub name: String,
    pub xmin: i64,
    pub ymin: i64,
    pub xmax: i64,
    pub ymax: i64,
}

impl AnnotatedObject {
    pub fn new(name: impl Into<String>, bbox: BoundingBox) -> Self {
        let [xmin, ymin, xmax, ymax] = bbox.coords().map(i64::from);
        Self {
            name: name.into(),
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn bounding_box(&self) -> Result<BoundingBox, GeometryError> {
        BoundingBox::from_signed(self.xmin, self.ymin, self.xmax, self.ymax)
    }

    pub fn is_gun(&self) -> bool {
        self.name == "gun"
    }
}

/// Ground truth for one image. Values are kept as read so that lenient
/// parsing can report bad geometry as findings instead of failing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub filename: String,
    pub width: i64,
    pub height: i64,
    pub depth: i64,
    pub objects: Vec<AnnotatedObject>,
}

impl AnnotationRecord {
    pub fn frame_size(&self) -> Option<FrameSize> {
        let w = u32::try_from(self.width).ok()?;
        let h = u32::try_from(self.height).ok()?;
        FrameSize::new(w, h).ok()
    }

    pub fn gun_objects(&self) -> impl Iterator<Item = &AnnotatedObject> {
        self.objects.iter().filter(|o| o.is_gun())
    }

    /// Checks image dimensions and that every box is non-degenerate and
    /// inside the image.
    pub fn check_geometry(&self) -> Result<(), AnnotationError> {
        let size = self.frame_size().ok_or_else(|| AnnotationError::ImageSize {
            file: self.filename.clone(),
            width: self.width,
            height: self.height,
        })?;
        for o in &self.objects {
            let bbox = o.bounding_box().map_err(|source| AnnotationError::Geometry {
                file: self.filename.clone(),
                source,
            })?;
            if !bbox.fits_within(size) {
                return Err(AnnotationError::Geometry {
                    file: self.filename.clone(),
                    source: GeometryError::OutOfBounds { bbox, frame: size },
                });
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct PartialObject {
    name: Option<String>,
    coords: [Option<i64>; 4],
    has_bndbox: bool,
}

fn parse_int(element: &'static str, text: &str) -> Result<i64, AnnotationError> {
    let t = text.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Ok(v);
    }
    // some tools write integral coordinates as floats
    match t.parse::<f64>() {
        Ok(f) if f.is_finite() => Ok(f.round() as i64),
        _ => Err(AnnotationError::Value {
            element,
            value: t.to_string(),
        }),
    }
}

/// Reads a document without checking geometry.
pub fn parse_annotation_lenient(document: &[u8]) -> Result<AnnotationRecord, AnnotationError> {
    let mut reader = Reader::from_reader(document);
    reader.config_mut().trim_text(true);
    let xml_err = |reader: &Reader<&[u8]>, message: String| AnnotationError::Xml {
        offset: reader.error_position(),
        message,
    };

    let mut stack: Vec<String> = Vec::new();
    let mut saw_root = false;
    let mut filename = None;
    let mut saw_size = false;
    let (mut width, mut height, mut depth) = (None, None, None);
    let mut objects = Vec::new();
    let mut current: Option<PartialObject> = None;

    loop {
        let event = reader.read_event().map_err(|e| xml_err(&reader, e.to_string()))?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if stack.is_empty() {
                    if saw_root || name != "annotation" {
                        return Err(AnnotationError::Missing("annotation"));
                    }
                    saw_root = true;
                }
                match (stack.len(), name.as_str()) {
                    (1, "size") => saw_size = true,
                    (1, "object") => current = Some(PartialObject::default()),
                    (2, "bndbox") if stack[1] == "object" => {
                        if let Some(o) = current.as_mut() {
                            o.has_bndbox = true;
                        }
                    }
                    _ => {}
                }
                stack.push(name);
            }
            Event::Empty(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if stack.is_empty() {
                    return Err(AnnotationError::Missing("annotation"));
                }
                if stack.len() == 1 && name == "size" {
                    saw_size = true;
                }
            }
            Event::Text(t) => {
                let text = t.unescape().map_err(|e| xml_err(&reader, e.to_string()))?.into_owned();
                let path: Vec<&str> = stack.iter().map(String::as_str).collect();
                match path.as_slice() {
                    ["annotation", "filename"] => filename = Some(text.trim().to_string()),
                    ["annotation", "size", "width"] => width = Some(parse_int("width", &text)?),
                    ["annotation", "size", "height"] => height = Some(parse_int("height", &text)?),
                    ["annotation", "size", "depth"] => depth = Some(parse_int("depth", &text)?),
                    ["annotation", "object", "name"] => {
                        if let Some(o) = current.as_mut() {
                            o.name = Some(text.trim().to_string());
                        }
                    }
                    ["annotation", "object", "bndbox", field] => {
                        let (slot, element) = match *field {
                            "xmin" => (0, "xmin"),
                            "ymin" => (1, "ymin"),
                            "xmax" => (2, "xmax"),
                            "ymax" => (3, "ymax"),
                            _ => continue,
                        };
                        if let Some(o) = current.as_mut() {
                            o.coords[slot] = Some(parse_int(element, &text)?);
                        }
                    }
                    _ => {}
                }
            }
            Event::End(_) => {
                let closed = stack.pop();
                if stack.len() == 1 && closed.as_deref() == Some("object") {
                    let o = current.take().expect("object start seen");
                    let name = o.name.ok_or(AnnotationError::Missing("object/name"))?;
                    if !o.has_bndbox {
                        return Err(AnnotationError::Missing("object/bndbox"));
                    }
                    let [xmin, ymin, xmax, ymax] = o.coords;
                    objects.push(AnnotatedObject {
                        name,
                        xmin: xmin.ok_or(AnnotationError::Missing("xmin"))?,
                        ymin: ymin.ok_or(AnnotationError::Missing("ymin"))?,
                        xmax: xmax.ok_or(AnnotationError::Missing("xmax"))?,
                        ymax: ymax.ok_or(AnnotationError::Missing("ymax"))?,
                    });
                }
            }
            Event::Eof => {
                if !stack.is_empty() {
                    return Err(xml_err(&reader, format!("unclosed element <{}>", stack.last().unwrap())));
                }
                break;
            }
            _ => {}
        }
    }

    if !saw_root {
        return Err(AnnotationError::Missing("annotation"));
    }
    let filename = filename.ok_or(AnnotationError::Missing("filename"))?;
    if !saw_size {
        return Err(AnnotationError::Missing("size"));
    }
    Ok(AnnotationRecord {
        filename,
        width: width.ok_or(AnnotationError::Missing("width"))?,
        height: height.ok_or(AnnotationError::Missing("height"))?,
        depth: depth.unwrap_or(3),
        objects,
    })
}

/// Reads a document and rejects bad geometry.
pub fn parse_annotation(document: &[u8]) -> Result<AnnotationRecord, AnnotationError> {
    let record = parse_annotation_lenient(document)?;
    record.check_geometry()?;
    Ok(record)
}

fn escape(s: &str) -> std::borrow::Cow<'_, str> {
    quick_xml::escape::escape(s)
}

/// Writes a record in the schema above.
pub fn serialize_annotation(record: &AnnotationRecord) -> String {
    let mut out = String::new();
    out.push_str("<annotation>\n");
    let _ = writeln!(out, "  <filename>{}</filename>", escape(&record.filename));
    let _ = writeln!(
        out,
        "  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>{}</depth>\n  </size>",
        record.width, record.height, record.depth
    );
    for o in &record.objects {
        let _ = writeln!(
            out,
            "  <object>\n    <name>{}</name>\n    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n    </bndbox>\n  </object>",
            escape(&o.name),
            o.xmin,
            o.ymin,
            o.xmax,
            o.ymax
        );
    }
    out.push_str("</annotation>\n");
    out
}
