//! Shared scaffolding for the criterion benches: a synthetic screen and step
//! that are representative of real corpus material without any IO.

use std::sync::Arc;

use guiprobe_core::model::{Action, Point, Region, Screen, Step};

pub fn bench_screen(width: u32, height: u32) -> Arc<Screen> {
    let mut pixels = Vec::with_capacity((width * height * 3) as usize);
    for y in 0..height {
        for x in 0..width {
            pixels.push((x * 7 % 256) as u8);
            pixels.push((y * 5 % 256) as u8);
            pixels.push(((x + y) % 256) as u8);
        }
    }
    Arc::new(Screen::new(width, height, pixels).expect("buffer matches dimensions"))
}

pub fn bench_step(screen: Arc<Screen>) -> Step {
    let cx = screen.width as i64 / 3;
    let cy = screen.height as i64 / 2;
    Step {
        sample_id: "bench-000".into(),
        step_index: 0,
        gt_region: Some(Region::new(
            (cx - 20) as u32,
            (cy - 12) as u32,
            (cx + 20) as u32,
            (cy + 12) as u32,
        )),
        gt_action: Action::Click(Point::new(cx, cy)),
        goal: "Order a pizza from the nearest store".into(),
        instruction: Some("Tap the checkout button".into()),
        screen,
    }
}
