//! Render each synthetic scene template from the reference camera and from a
//! turned camera. Pass an output directory to save the PNGs.

use recompose::geometry::camera_motion;
use recompose::scenegen::{make_scene, reference_intrinsics, render, Template};
use recompose::CameraPose;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1);
    let k = reference_intrinsics();
    for template in Template::ALL {
        let scene = make_scene(3, template);
        for (tag, pose) in [
            ("optimal", CameraPose::identity()),
            ("turned", CameraPose::identity().turned(&camera_motion(9.0, 4.0, -3.0))),
        ] {
            let frame = render(&scene, &k, &pose);
            println!("{template} {tag}: {} elements, hash {}", scene.elements.len(), &frame.content_hash()[..16]);
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
                frame.save_png(format!("{dir}/{template}_{tag}.png"))?;
            }
        }
    }
    Ok(())
}
