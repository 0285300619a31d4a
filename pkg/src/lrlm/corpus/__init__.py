from .clean import (
    KAZAKH_MARKERS,
    StageConfig,
    clean_text,
    collapse_whitespace,
    filter_html_tags,
    filter_language_id,
    filter_min_length,
    filter_script_ratio,
    filter_url_density,
    normalize_nfc,
    strip_control_chars,
)
from .dedup import HashOrigin, HashSet, HashSetError, dedup, md5_digest
from .pipeline import (
    STAGES,
    Document,
    IngestionError,
    Pipeline,
    PipelineReport,
    read_jsonl,
    run_pipeline,
    write_jsonl,
)
