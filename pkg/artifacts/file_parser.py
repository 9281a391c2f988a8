import hashlib

from artifacts.parsers.detection_file import identify_detections, parse_detections
from artifacts.parsers.truth_file import identify_truth, parse_truth
from utils.errors import InputFileError


class FrameFileParser:
    def __init__(self, logger, method=2):
        self.logger = logger
        self.method = method
        self.frame_parsers = {
            "Detection Frame File": (identify_detections, lambda p, lg: parse_detections(p, lg, self.method)),
            "Ground Truth File": (identify_truth, parse_truth),
        }

    def parse_file(self, fpath, expected=None):
        """
        Identifies and parses a frame file.

        Args:
            fpath (str): The path of the file to be parsed.
            expected (str, optional): Required file type, one of the parser names.

        Returns:
            tuple: (file_info dict with "file_type", parsed contents).

        Raises:
            InputFileError: If the file cannot be read, no parser recognizes it,
                or it is not of the expected type. Record errors of the matching
                parser propagate with their line numbers.
        """
        try:
            file_info, header = self.get_file_info(fpath)
        except OSError as e:
            self.logger.critical(f"parse_file: Reading file info raised {e}")
            raise InputFileError(f"cannot read file ({e})", fpath) from e
        for file_type, (identifier, parser) in self.frame_parsers.items():
            if identifier(fpath, self.logger, header=header) is True:
                if expected is not None and file_type != expected:
                    raise InputFileError(f"expected a {expected}, found a {file_type}", fpath)
                file_info["file_type"] = file_type
                contents = parser(fpath, self.logger)
                self.logger.debug(f"parse_file: Parsed {fpath} as {file_type} (sha256 {file_info['SHA256'][:12]})")
                return file_info, contents
        raise InputFileError("unrecognized frame file", fpath)

    def get_file_info(self, fpath):
        """
        Returns the file size and SHA256 along with the first 4 MiB of the file.
        """
        blocksize = 1024 * 1024
        with open(fpath, "rb") as f:
            header = f.read(blocksize * 4)
            f.seek(0)
            sha256 = hashlib.sha256()
            file_sz = 0
            while True:
                buf = f.read(blocksize)
                if not buf:
                    break
                sha256.update(buf)
                file_sz += len(buf)
        file_info = {
            "filepath": fpath,
            "file_size": file_sz,
            "SHA256": str(sha256.hexdigest()),
        }
        return file_info, header
