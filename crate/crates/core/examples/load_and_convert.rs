//! Loading datasets in both input formats, relabeling senses and filtering.

use subsense::dataset::{convert_wsd_to_wsi, filter_dataset, parse_jsonl, parse_senseval_xml};

const XML: &str = r#"<corpus lang="en">
  <lexelt item="bass.n">
    <instance id="bass.1"><answer senseid="bass%fish"/>
      <context>He caught a <head>bass</head> in the lake.</context></instance>
    <instance id="bass.2"><answer senseid="bass%music"/>
      <context>She plays <head>bass</head> in a band.</context></instance>
    <instance id="bass.3"><answer senseid="bass%fish"/>
      <context>The   <head>bass</head> swam   away.</context></instance>
  </lexelt>
</corpus>"#;

const JSONL: &str = r#"{"instance_id":"p.1","target_lemma":"pitch","language":"en","context":"A steep pitch of the roof.","target_span":[8,13],"gold_sense":"slope"}
{"instance_id":"p.2","target_lemma":"pitch","language":"en","context":"The pitch was wet after rain.","target_span":[4,9],"gold_sense":"field"}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let xml = parse_senseval_xml("toy-xml", XML)?;
    for inst in xml.instances() {
        let (before, target, after) = inst.split_context();
        println!("{:8} [{before}|{target}|{after}] sense={:?}", inst.instance_id, inst.gold_sense);
    }

    let wsi = convert_wsd_to_wsi(&xml)?;
    println!("relabeled senses: {:?}", wsi.instances().iter().map(|i| i.gold_sense.as_deref()).collect::<Vec<_>>());

    let jsonl = parse_jsonl("toy-jsonl", JSONL)?;
    println!("jsonl summary: {:?}", jsonl.summary());

    let kept = filter_dataset(&xml, 2, 3);
    println!("after filtering (>= 2 senses, >= 3 instances): {} words", kept.words().count());
    print!("{}", kept.to_jsonl());
    Ok(())
}
