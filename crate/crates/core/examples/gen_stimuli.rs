//! Bind a built-in lexicon to its template and print one paradigm, the
//! critical region in brackets.
//!
//!     cargo run --example gen_stimuli -- [construction] [items] [seed]

use gaplab::stimgen::{bind_lexicon, builtin_lexicon, builtin_template, write_items_jsonl};
use gaplab::Construction;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let c: Construction = args.next().as_deref().unwrap_or("clefting").parse()?;
    let count: usize = args.next().map_or(Ok(4), |a| a.parse())?;
    let seed: u64 = args.next().map_or(Ok(11), |a| a.parse())?;

    let items = bind_lexicon(builtin_template(c), builtin_lexicon(c), count, seed)?;
    let first = &items[0];
    println!("{} item {}:", c.label(), first.item_id);
    for s in &first.sentences {
        let marked: Vec<String> = s
            .tokens
            .iter()
            .enumerate()
            .map(|(k, t)| match (k == s.critical_region.start, k + 1 == s.critical_region.end) {
                (true, true) => format!("[{t}]"),
                (true, false) => format!("[{t}"),
                (false, true) => format!("{t}]"),
                _ => t.clone(),
            })
            .collect();
        let star = if s.grammatical { " " } else { "*" };
        println!("  {} {star}{}", s.condition, marked.join(" "));
    }
    println!("\nall {count} items as JSON lines:");
    write_items_jsonl(&items, std::io::stdout().lock())?;
    Ok(())
}
