"""Reference HTTP tool server for the image-restoration wire protocol."""

from .server import (
    TASK_NAMES,
    decode_image,
    default_tools,
    encode_image,
    handle_restore,
    make_server,
    serve,
)

__version__ = "0.1.0"

__all__ = [
    "TASK_NAMES",
    "decode_image",
    "default_tools",
    "encode_image",
    "handle_restore",
    "make_server",
    "serve",
    "__version__",
]
