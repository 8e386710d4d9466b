//! Label the 8-connected objects of a small mask and split each one into
//! its boundary band and interior.
//!
//!     cargo run --example connected_components

use aio2::grid::{boundary_band, box_filter, connected_components};
use aio2::Raster;

const ART: &str = "\
..........
.####.....
.####..#..
.####...#.
.........#
..........
.....###..
.....###..
.....###..
..........";

fn main() -> aio2::Result<()> {
    let rows: Vec<&str> = ART.lines().collect();
    let (w, h) = (rows[0].len(), rows.len());
    let mask = Raster::from_fn(w, h, |x, y| (rows[y].as_bytes()[x] == b'#') as u8 as f32);

    let cc = connected_components(&mask)?;
    println!("{} components (diagonal steps connect)", cc.count());
    for y in 0..h {
        let line: String = (0..w)
            .map(|x| match cc.id_at(x, y) {
                0 => '.',
                id => char::from_digit(id, 36).unwrap_or('?'),
            })
            .collect();
        println!("  {line}");
    }

    for obj in &cc.objects().objects {
        let (amb, unamb) = boundary_band(&obj.pixels, w, h, 1);
        println!(
            "object {}: area {:>2}, bbox ({},{})-({},{}), band {:>2}, interior {}",
            obj.id,
            obj.area(),
            obj.bbox.x0,
            obj.bbox.y0,
            obj.bbox.x1,
            obj.bbox.y1,
            amb.len(),
            unamb.len()
        );
    }

    let soft = box_filter(&mask, 3)?;
    println!("3x3 box filter, row 2: {:?}", &soft.values()[2 * w..3 * w]);
    Ok(())
}
