"""DCT/AES/block-shuffle frame cipher."""

from sepris.codec.cipher import (
    aes_coeff_layer,
    cipher_image,
    cipher_spatial,
    cipher_visualization,
    decipher_frame,
    decipher_plane,
    decode_plane,
    encipher_frame,
    encode_plane,
    shuffle_blocks,
    tile_permutation,
    unshuffle_blocks,
)
from sepris.codec.frames import CipherFrame, CoefficientPlane, DabKeyset, FrameBuffer
from sepris.codec.transform import (
    BASE_QUANT,
    dct_matrix,
    dequantize,
    forward_dct,
    inverse_dct,
    quant_matrix,
    quantize,
)

__all__ = [
    "BASE_QUANT",
    "CipherFrame",
    "CoefficientPlane",
    "DabKeyset",
    "FrameBuffer",
    "aes_coeff_layer",
    "cipher_image",
    "cipher_spatial",
    "cipher_visualization",
    "dct_matrix",
    "decipher_frame",
    "decipher_plane",
    "decode_plane",
    "dequantize",
    "encipher_frame",
    "encode_plane",
    "forward_dct",
    "inverse_dct",
    "quant_matrix",
    "quantize",
    "shuffle_blocks",
    "tile_permutation",
    "unshuffle_blocks",
]
