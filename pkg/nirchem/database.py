# vim: set ts=8 sts=2 sw=2 tw=99 et:
#
# This file is part of nirchem.
#
# nirchem is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# nirchem is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with nirchem. If not, see <http://www.gnu.org/licenses/>.
import json
import sqlite3
import time
from nirchem import util

LATEST_VERSION = 1

class DatabaseException(util.NirchemException):
  def __init__(self, *args, **kwargs):
    super(DatabaseException, self).__init__(*args, **kwargs)

def CreateDatabase(path):
  cn = sqlite3.connect(path)
  queries = [
    # One row per completed stage. |config_hash| covers the config sections
    # the stage reads; |upstream_hash| is the config_hash of the stage it
    # consumed, so a re-run upstream makes this row stale.
    "create table if not exists stages(         \
      name varchar(32) primary key not null,    \
      config_hash varchar(64) not null,         \
      upstream_hash varchar(64),                \
      outputs text not null default '[]',       \
      stamp real not null default 0.0           \
    )",

    # Extra key/values we might randomly want.
    "create table if not exists vars(           \
      key varchar(255) primary key not null,    \
      val varchar(255)                          \
    )",

    "insert or ignore into vars (key, val) values ('db_version', '{0}')".format(LATEST_VERSION),
  ]
  for query in queries:
    cn.execute(query)
  cn.commit()
  cn.close()

  db = Database(path)
  db.connect()
  return db

class StageRecord(object):
  def __init__(self, name, config_hash, upstream_hash, outputs, stamp):
    self.name = name
    self.config_hash = config_hash
    self.upstream_hash = upstream_hash
    self.outputs = outputs
    self.stamp = stamp

class Database(object):
  def __init__(self, path):
    self.path = path
    self.cn = None

  def connect(self):
    assert not self.cn
    try:
      self.cn = sqlite3.connect(self.path)
    except sqlite3.Error as exn:
      raise DatabaseException('could not open stage database {0}: {1}'.format(self.path, exn))
    self.check_version()

  def close(self):
    if self.cn:
      self.cn.close()
    self.cn = None

  def __enter__(self):
    self.connect()
    return self

  def __exit__(self, type, value, traceback):
    self.close()

  def commit(self):
    self.cn.commit()

  def check_version(self):
    try:
      cursor = self.cn.execute("select val from vars where key = 'db_version'")
      row = cursor.fetchone()
    except sqlite3.Error as exn:
      raise DatabaseException('{0} is not a stage database: {1}'.format(self.path, exn))
    if not row:
      raise DatabaseException('stage database {0} has no version'.format(self.path))
    if row[0] != str(LATEST_VERSION):
      raise DatabaseException('stage database {0} has version {1}, expected {2}'.format(
        self.path, row[0], LATEST_VERSION))

  def query_var(self, var):
    cursor = self.cn.execute("select val from vars where key = ?", (var,))
    row = cursor.fetchone()
    if row is None:
      return None
    return row[0]

  def set_var(self, var, value):
    self.cn.execute("insert or replace into vars (key, val) values (?, ?)", (var, value))

  def query_stage(self, name):
    cursor = self.cn.execute(
      "select name, config_hash, upstream_hash, outputs, stamp from stages where name = ?",
      (name,))
    row = cursor.fetchone()
    if row is None:
      return None
    return StageRecord(row[0], row[1], row[2], json.loads(row[3]), row[4])

  def record_stage(self, name, config_hash, upstream_hash, outputs):
    self.cn.execute(
      "insert or replace into stages (name, config_hash, upstream_hash, outputs, stamp) \
       values (?, ?, ?, ?, ?)",
      (name, config_hash, upstream_hash, json.dumps(sorted(outputs)), time.time()))
    self.cn.commit()
