from .blocks import BlockFileError, pretokenize_corpus, read_blocks, read_header, write_blocks
from .bpe import DEFAULT_VOCAB_SIZE, EOT, Tokenizer, TokenizerError, count_pretokens, pretokenize, train_bpe
from .bytemap import bytes_to_unicode, unicode_to_bytes
from .fertility import FertilityReport, count_words, fertility
