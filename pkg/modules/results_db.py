import sqlite3
import time


class SQLiteDB:

    def __init__(self):
        self.pragmas = [
            f"PRAGMA busy_timeout = {30000}",
            "PRAGMA journal_mode = WAL",
            f"PRAGMA wal_autocheckpoint = {10000}",
            "PRAGMA temp_store = 1",
            "PRAGMA synchronous = NORMAL",
            "PRAGMA foreign_keys = OFF",
            f"PRAGMA cache_size = {-32768}",
        ]
        self.mem_pragmas = [
            "PRAGMA journal_mode = OFF",
            "PRAGMA synchronous = OFF",
            "PRAGMA temp_store = MEMORY",
        ]

    def connect(self, filepath, pragmas=None):
        """
        Connects to a SQLite database and applies the pragmas.

        Benchmark worker threads write through their own connections, so the
        connection is opened with check_same_thread disabled.

        Args:
            filepath (str): Path of the database file, or ':memory:'.
            pragmas (list of str, optional): PRAGMA statements; defaults to the
                WAL settings, or the in-memory settings for ':memory:'.

        Returns:
            tuple: (connection, cursor).
        """
        db = sqlite3.connect(filepath, check_same_thread=False)
        cur = db.cursor()
        if filepath == ":memory:":
            pragmas = self.mem_pragmas
        for pragma in self.pragmas if pragmas is None else pragmas:
            cur.execute(pragma)
        return db, cur


def open_db(db_path):
    dbf = SQLiteDB()
    return dbf.connect(db_path)


def close_db(db, cur):
    """Closes the cursor and the connection, committing any open transaction first."""
    cur.close()
    if db.in_transaction:
        db.commit()
    db.close()


def dict_factory(cursor, row):
    d = {}
    for idx, col in enumerate(cursor.description):
        d[col[0]] = row[idx]
    return d


class BenchmarkStore(object):

    def __init__(self, db_path, logger):
        self.db_path = db_path
        self.logger = logger
        self.bootstrap_runs_table()

    def bootstrap_runs_table(self):
        """
        Creates the runs table and its variant index if they do not exist.

        Each row is one Monte-Carlo run of one filter variant with its RMS-GOSPA
        decomposition and runtime.
        """
        sql = [
            """
            CREATE TABLE IF NOT EXISTS "runs" (
                "rowid"	INTEGER NOT NULL PRIMARY KEY,
                "variant"	TEXT NOT NULL COLLATE NOCASE,
                "seed"	INTEGER NOT NULL,
                "rms_gospa"	REAL NOT NULL,
                "localization"	REAL NOT NULL,
                "missed"	REAL NOT NULL,
                "false_"	REAL NOT NULL,
                "runtime_s"	REAL NOT NULL,
                "created"	REAL NOT NULL,
                UNIQUE("variant","seed")
            );
            """,
            """
            CREATE INDEX IF NOT EXISTS "variant_runs" ON "runs" (
                "variant"
            );
            """,
        ]
        db, cur = open_db(self.db_path)
        for s in sql:
            try:
                cur.execute(s)
            except Exception as e:
                self.logger.error(f"bootstrap_runs_table: {e} was raised by SQL statement {s}")
        close_db(db, cur)
        return

    def add_run(self, variant, seed, summary, runtime_s):
        """
        Inserts or replaces the result of one run.

        Args:
            variant (str): Filter variant name.
            seed (int): Scenario seed.
            summary (dict): RMS values {"total", "localization", "missed", "false"}.
            runtime_s (float): Filter runtime (s).
        """
        insert_sql = """
            INSERT OR REPLACE INTO runs
            (
                variant, seed, rms_gospa, localization, missed,
                false_, runtime_s, created
            )
            VALUES
            (
                ?, ?, ?, ?, ?,
                ?, ?, ?
            )
        """
        db, cur = open_db(self.db_path)
        try:
            cur.execute(
                insert_sql,
                [
                    variant,
                    int(seed),
                    float(summary["total"]),
                    float(summary["localization"]),
                    float(summary["missed"]),
                    float(summary["false"]),
                    float(runtime_s),
                    time.time(),
                ],
            )
        except Exception as e:
            self.logger.error(f"add_run: Raised {e}")
        close_db(db, cur)

    def fetch_runs(self, variant=None):
        """
        Returns stored runs ordered by variant and seed, optionally for one variant.

        Returns:
            list: One dict per row.
        """
        db, cur = open_db(self.db_path)
        results = []
        try:
            if variant is None:
                cur.execute("SELECT * FROM runs ORDER BY variant, seed")
            else:
                cur.execute("SELECT * FROM runs WHERE variant = ? ORDER BY seed", [variant])
            for row in cur.fetchall():
                if row:
                    results.append(dict_factory(cur, row))
        except Exception as e:
            self.logger.error(f"fetch_runs: Raised {e}")
        close_db(db, cur)
        return results
